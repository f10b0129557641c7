#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "csmae/data.hpp"
#include "csmae/errors.hpp"
#include "csmae/rng.hpp"
#include "test_util.hpp"

using namespace csmae;
namespace fs = std::filesystem;

TEST_CASE("clip generation is deterministic") {
  SynthConfig cfg;
  const VideoClip a = generate_clip(cfg, {3, phase_name(3)}, 99);
  const VideoClip b = generate_clip(cfg, {3, phase_name(3)}, 99);
  CHECK(a.pixels == b.pixels);
  CHECK(a.foreground == b.foreground);
  const VideoClip c = generate_clip(cfg, {3, phase_name(3)}, 100);
  CHECK(a.pixels != c.pixels);
  CHECK(a.frames == 8);
  CHECK(a.height == 32);
  CHECK(a.width == 32);
}

TEST_CASE("static degenerate clip has identical frames") {
  SynthConfig cfg;
  cfg.noise_sigma = 0;
  cfg.motion_speed_min = cfg.motion_speed_max = 0;
  for (std::size_t phase = 0; phase < cfg.num_phases; ++phase) {
    const VideoClip clip = generate_clip(cfg, {phase, phase_name(phase)}, 5);
    const std::size_t frame = clip.channels * clip.height * clip.width;
    for (std::size_t t = 1; t < clip.frames; ++t) {
      CHECK(std::equal(clip.pixels.begin(), clip.pixels.begin() + frame, clip.pixels.begin() + t * frame));
    }
  }
}

TEST_CASE("phases differ only where some foreground is") {
  SynthConfig cfg;
  cfg.noise_sigma = 0;
  const VideoClip a = generate_clip(cfg, {0, phase_name(0)}, 17);
  const VideoClip b = generate_clip(cfg, {5, phase_name(5)}, 17);
  std::size_t differing = 0, outside = 0;
  for (std::size_t t = 0; t < a.frames; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < a.height; ++h)
        for (std::size_t w = 0; w < a.width; ++w) {
          if (a.at(t, c, h, w) == b.at(t, c, h, w)) continue;
          ++differing;
          if (!a.is_foreground(t, h, w) && !b.is_foreground(t, h, w)) ++outside;
        }
  CHECK(differing > 0);
  CHECK(outside == 0);
  CHECK(a.foreground != b.foreground);
}

TEST_CASE("foreground coverage stays between 2% and 25% of every frame") {
  SynthConfig cfg;
  for (std::size_t i = 0; i < 96; ++i) {
    const std::size_t phase = i % cfg.num_phases;
    const VideoClip clip = generate_clip(cfg, {phase, phase_name(phase)}, clip_seed(11, i));
    const std::size_t area = clip.height * clip.width;
    for (std::size_t t = 0; t < clip.frames; ++t) {
      std::size_t fg = 0;
      for (std::size_t p = 0; p < area; ++p) fg += clip.foreground[t * area + p];
      const double share = static_cast<double>(fg) / static_cast<double>(area);
      INFO("clip " << i << " phase " << phase << " frame " << t << " share " << share);
      CHECK(share >= 0.02);
      CHECK(share <= 0.25);
    }
  }
}

TEST_CASE("synth config validation") {
  SynthConfig cfg;
  cfg.shape_palette = {"triangle"};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.background_jitter = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  CHECK_THROWS_AS(generate_clip(cfg, {12, "x"}, 1), ConfigError);
}

TEST_CASE("label counts use the ceiling") {
  CHECK(labeled_clip_count(10, 0.1) == 1);
  CHECK(labeled_clip_count(120, 0.1) == 12);
  CHECK(labeled_clip_count(11, 0.1) == 2);
  CHECK(labeled_clip_count(7, 1.0) == 7);
  CHECK_THROWS_AS(labeled_clip_count(10, 0.0), ConfigError);
  CHECK_THROWS_AS(labeled_clip_count(10, 1.5), ConfigError);
}

TEST_CASE("corpus generation and manifest") {
  test::TempDir dir;
  SynthConfig cfg;
  cfg.frames = 4;
  cfg.height = cfg.width = 16;
  const Manifest m = generate_corpus(cfg, 24, 0.1, 3, dir.path() / "c");
  REQUIRE(m.entries.size() == 24);
  CHECK(m.labeled_count() == 3);
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(m.entries[i].phase_index == i % 12);
    CHECK(m.entries[i].labeled == (i < 3));
    CHECK(fs::exists(m.clip_path(i)));
    CHECK(fs::exists(m.mask_path(i)));
  }
  const Manifest back = read_manifest(dir.path() / "c" / "manifest.json");
  REQUIRE(back.entries.size() == 24);
  CHECK(back.entries[5].path == m.entries[5].path);
  CHECK(back.entries[5].phase_name == phase_name(5));

  const Manifest all = generate_corpus(cfg, 5, 1.0, 3, dir.path() / "all");
  CHECK(all.labeled_count() == 5);
}

TEST_CASE("phase histogram of a 120-clip corpus") {
  test::TempDir dir;
  SynthConfig cfg;
  cfg.frames = 2;
  cfg.height = cfg.width = 8;
  const Manifest m = generate_corpus(cfg, 120, 0.1, 1, dir.path());
  std::map<std::size_t, int> hist;
  for (const auto& e : m.entries) ++hist[e.phase_index];
  CHECK(hist.size() == 12);
  for (const auto& [phase, n] : hist) CHECK(n == 10);
  CHECK(m.labeled_count() == 12);
}

TEST_CASE("corpus regeneration is byte-identical") {
  test::TempDir dir;
  SynthConfig cfg;
  cfg.frames = 4;
  cfg.height = cfg.width = 16;
  generate_corpus(cfg, 6, 0.5, 21, dir.path() / "a");
  generate_corpus(cfg, 6, 0.5, 21, dir.path() / "b");
  for (const auto& entry : fs::directory_iterator(dir.path() / "a")) {
    const auto name = entry.path().filename();
    CHECK(test::read_bytes(entry.path()) == test::read_bytes(dir.path() / "b" / name));
  }
}

TEST_CASE("clip file round trip within quantization") {
  test::TempDir dir;
  SynthConfig cfg;
  const VideoClip clip = generate_clip(cfg, {1, phase_name(1)}, 4);
  save_clip(clip, dir.path() / "x.csvc");
  const VideoClip back = load_raw_clip(dir.path() / "x.csvc");
  REQUIRE(back.pixels.size() == clip.pixels.size());
  double worst = 0;
  for (std::size_t i = 0; i < clip.pixels.size(); ++i) worst = std::max(worst, double(std::abs(back.pixels[i] - clip.pixels[i])));
  CHECK(worst <= 1.0 / 255.0 + 1e-7);

  save_foreground_mask(clip, dir.path() / "x.fg");
  VideoClip with_mask = back;
  load_foreground_mask(dir.path() / "x.fg", with_mask);
  CHECK(with_mask.foreground == clip.foreground);
}

TEST_CASE("clip header/payload mismatch is a format error") {
  test::TempDir dir;
  const VideoClip clip = VideoClip::blank(2, 3, 4, 4);
  save_clip(clip, dir.path() / "ok.csvc");
  auto bytes = test::read_bytes(dir.path() / "ok.csvc");
  bytes.pop_back();
  test::write_bytes(dir.path() / "short.csvc", bytes);
  CHECK_THROWS_AS(load_raw_clip(dir.path() / "short.csvc"), FormatError);
  bytes.push_back(0);
  bytes.push_back(0);
  test::write_bytes(dir.path() / "long.csvc", bytes);
  CHECK_THROWS_AS(load_raw_clip(dir.path() / "long.csvc"), FormatError);
  bytes[0] = 'X';
  test::write_bytes(dir.path() / "magic.csvc", bytes);
  CHECK_THROWS_AS(load_raw_clip(dir.path() / "magic.csvc"), FormatError);
  CHECK_THROWS_AS(load_raw_clip(dir.path() / "absent.csvc"), IoError);
}

TEST_CASE("resizing a constant image keeps the constant") {
  VideoClip clip = VideoClip::blank(2, 3, 64, 64);
  std::fill(clip.pixels.begin(), clip.pixels.end(), 0.4f);
  const VideoClip small = resize_bilinear(clip, 32, 32);
  CHECK(small.height == 32);
  for (float v : small.pixels) CHECK(v == doctest::Approx(0.4f));

  VideoClip wide = VideoClip::blank(1, 3, 20, 40);
  const VideoClip sq = center_crop_square(wide);
  CHECK(sq.height == 20);
  CHECK(sq.width == 20);
}

TEST_CASE("load with layout crops and resizes") {
  test::TempDir dir;
  VideoClip clip = VideoClip::blank(1, 3, 8, 16);
  for (std::size_t w = 0; w < 16; ++w)
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t c = 0; c < 3; ++c) clip.at(0, c, h, w) = (w >= 4 && w < 12) ? 1.0f : 0.0f;
  save_clip(clip, dir.path() / "w.csvc");
  const VideoClip out = load_raw_clip(dir.path() / "w.csvc", ClipLayout{4, 4, true});
  CHECK(out.height == 4);
  CHECK(out.width == 4);
  for (float v : out.pixels) CHECK(v == doctest::Approx(1.0f));
}

TEST_CASE("patch targets") {
  TokenizerConfig tc;
  SUBCASE("constant patches normalize to zero") {
    VideoClip clip = VideoClip::blank(2, 3, 4, 4);
    std::fill(clip.pixels.begin(), clip.pixels.end(), 0.7f);
    const PatchTargets t = patch_normalize_targets(clip, tc, true);
    CHECK(t.values.rows() == 1);
    for (Real v : t.values.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("normalize off is the raw tubelet") {
    SynthConfig sc;
    const VideoClip clip = generate_clip(sc, {0, phase_name(0)}, 2);
    const PatchTargets t = patch_normalize_targets(clip, tc, false);
    // Token 0 is the tubelet at the origin, ordered (c, dt, dh, dw).
    std::size_t k = 0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t dt = 0; dt < 2; ++dt)
        for (std::size_t dh = 0; dh < 4; ++dh)
          for (std::size_t dw = 0; dw < 4; ++dw) CHECK(t.values.at(0, k++) == clip.at(dt, c, dh, dw));
  }
  SUBCASE("normalized random patches are standardized") {
    VideoClip clip = VideoClip::blank(2, 3, 8, 8);
    Rng rng(4);
    for (auto& p : clip.pixels) p = static_cast<float>(rng.uniform());
    const PatchTargets t = patch_normalize_targets(clip, tc, true, 1e-6f);
    for (std::size_t r = 0; r < t.values.rows(); ++r) {
      double m = 0, v = 0;
      const std::size_t k = t.values.cols();
      for (std::size_t j = 0; j < k; ++j) m += t.values.at(r, j);
      m /= k;
      for (std::size_t j = 0; j < k; ++j) v += (t.values.at(r, j) - m) * (t.values.at(r, j) - m);
      v /= k;
      CHECK(std::abs(m) < 1e-5);
      CHECK(std::abs(v - 1) < 1e-2);
    }
  }
  SUBCASE("shifting one tubelet by a constant leaves its target") {
    VideoClip clip = VideoClip::blank(2, 3, 8, 8);
    Rng rng(8);
    for (auto& p : clip.pixels) p = static_cast<float>(0.25 + 0.5 * rng.uniform());
    const PatchTargets before = patch_normalize_targets(clip, tc, true);
    for (std::size_t t = 0; t < 2; ++t)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t h = 4; h < 8; ++h)
          for (std::size_t w = 0; w < 4; ++w) clip.at(t, c, h, w) += 0.2f;
    const PatchTargets after = patch_normalize_targets(clip, tc, true);
    // Token (t=0, h=1, w=0) is id 2 on the 1x2x2 grid.
    for (std::size_t j = 0; j < before.values.cols(); ++j) {
      CHECK(after.values.at(2, j) == doctest::Approx(before.values.at(2, j)).epsilon(1e-4));
    }
  }
}

TEST_CASE("foreground tokens mark tubelets touching the foreground") {
  TokenizerConfig tc;
  VideoClip clip = VideoClip::blank(2, 3, 8, 8);
  clip.foreground.assign(2 * 8 * 8, 0);
  clip.foreground[(1 * 8 + 5) * 8 + 6] = 1;  // t=1, h=5, w=6 -> cell (0, 1, 1)
  const auto flags = foreground_tokens(clip, tc);
  CHECK(flags == std::vector<std::uint8_t>{0, 0, 0, 1});
}
