#include "csmae/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include "json.hpp"
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "csmae/errors.hpp"
#include "csmae/rng.hpp"

namespace csmae {

namespace fs = std::filesystem;
using Rgb = std::array<double, 3>;

VideoClip VideoClip::blank(std::size_t frames, std::size_t channels, std::size_t height, std::size_t width) {
  VideoClip clip;
  clip.frames = frames;
  clip.channels = channels;
  clip.height = height;
  clip.width = width;
  clip.pixels.assign(frames * channels * height * width, 0.0f);
  return clip;
}

std::string phase_name(std::size_t index) {
  std::ostringstream out;
  out << "step_" << std::setw(2) << std::setfill('0') << index;
  return out.str();
}

void SynthConfig::validate() const {
  if (num_phases < 2) throw ConfigError("num_phases must be at least 2");
  if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be non-negative");
  if (frames == 0 || height == 0 || width == 0) throw ConfigError("clip dims must be positive");
  if (motion_speed_min < 0 || motion_speed_max < motion_speed_min) throw ConfigError("invalid motion speed range");
  if (shape_palette.empty()) throw ConfigError("shape_palette must not be empty");
  if (!(background_jitter >= 0 && background_jitter <= 1)) throw ConfigError("background_jitter must be in [0, 1]");
  for (const auto& s : shape_palette) {
    if (s != "bar" && s != "disk" && s != "rect" && s != "ring") throw ConfigError("unknown shape '" + s + "'");
  }
}

namespace {

enum class Motion { drift, orbit, oscillate };

struct PhaseStyle {
  std::string shape;
  Motion motion = Motion::drift;
  double direction = 0;  // radians
  double speed = 0;
  bool secondary = false;
  Rgb color{};
};

Rgb hsv(double h, double s, double v) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(hh);
  const double f = hh - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Rgb shape_color(const std::string& shape) {
  if (shape == "bar") return {0.78, 0.86, 0.97};
  if (shape == "disk") return {0.12, 0.78, 0.88};
  if (shape == "rect") return {0.28, 0.92, 0.36};
  return {0.96, 0.90, 0.28};
}

PhaseStyle style_for_phase(const SynthConfig& cfg, std::size_t phase) {
  const std::size_t palette = cfg.shape_palette.size();
  PhaseStyle s;
  s.shape = cfg.shape_palette[phase % palette];
  s.motion = static_cast<Motion>((phase / palette) % 3);
  s.direction = 2.0 * std::numbers::pi * static_cast<double>(phase) / static_cast<double>(cfg.num_phases);
  const double level =
      cfg.num_phases > 1 ? static_cast<double>((phase * 5) % cfg.num_phases) / static_cast<double>(cfg.num_phases - 1)
                         : 0.0;
  s.speed = cfg.motion_speed_min + (cfg.motion_speed_max - cfg.motion_speed_min) * level;
  s.secondary = phase % 3 == 0;
  s.color = cfg.color_coded_phases ? hsv(static_cast<double>(phase) / static_cast<double>(cfg.num_phases), 0.85, 0.95)
                                   : shape_color(s.shape);
  return s;
}

// Half extent of a shape's bounding circle (normalized units) before jitter.
double shape_radius(const std::string& shape) {
  if (shape == "bar") return 0.225;
  if (shape == "disk") return 0.13;
  if (shape == "rect") return 0.16;
  return 0.15;
}

// Coverage test in the shape's local frame; `along` in [-1,1] feeds shading.
bool covers(const std::string& shape, double dx, double dy, double orient, double size, double& along) {
  const double c = std::cos(orient), s = std::sin(orient);
  const double u = dx * c + dy * s;   // along orientation
  const double v = -dx * s + dy * c;  // across
  if (shape == "bar") {
    const double half_len = 0.225 * size, half_w = 0.05 * size;
    along = u / half_len;
    return std::abs(u) <= half_len && std::abs(v) <= half_w;
  }
  if (shape == "rect") {
    const double a = 0.12 * size, b = 0.10 * size;
    along = u / a;
    return std::abs(u) <= a && std::abs(v) <= b;
  }
  const double r = std::hypot(dx, dy);
  if (shape == "disk") {
    along = u / (0.13 * size);
    return r <= 0.13 * size;
  }
  along = u / (0.15 * size);
  return r <= 0.15 * size && r >= 0.08 * size;  // ring
}

// Triangle-wave reflection of x into [lo, hi].
double reflect(double x, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return lo;
  double y = std::fmod(x - lo, 2 * span);
  if (y < 0) y += 2 * span;
  return lo + (y <= span ? y : 2 * span - y);
}

struct Instrument {
  std::string shape;
  Rgb color{};
  double size = 1.0;
  double x0 = 0.5, y0 = 0.5;
  double phase0 = 0;
  double orient0 = 0;
};

struct Placement {
  double x, y, orient;
};

Placement place(const PhaseStyle& style, const Instrument& inst, std::size_t t, double speed) {
  const double margin = shape_radius(inst.shape) * inst.size + 0.02;
  const double lo = margin, hi = 1.0 - margin;
  const double dt = static_cast<double>(t);
  const double dx = std::cos(style.direction), dy = std::sin(style.direction);
  switch (style.motion) {
    case Motion::drift:
      return {reflect(inst.x0 + speed * dt * dx, lo, hi), reflect(inst.y0 + speed * dt * dy, lo, hi), inst.orient0};
    case Motion::orbit: {
      const double radius = std::max(0.05, std::min(0.5 - margin, 0.22));
      const double angle = inst.phase0 + (radius > 0 ? speed * dt / radius : 0.0);
      return {std::clamp(0.5 + radius * std::cos(angle), lo, hi), std::clamp(0.5 + radius * std::sin(angle), lo, hi),
              angle + std::numbers::pi / 2};
    }
    case Motion::oscillate: {
      const double amp = 4.0 * speed;
      const double offset = amp * (std::sin(0.9 * dt + inst.phase0) - std::sin(inst.phase0));
      return {std::clamp(inst.x0 + offset * dx, lo, hi), std::clamp(inst.y0 + offset * dy, lo, hi),
              inst.orient0 + 0.3 * offset / std::max(amp, 1e-9)};
    }
  }
  return {inst.x0, inst.y0, inst.orient0};
}

struct Texture {
  std::array<double, 3> fx{}, fy{}, ph{};
  double striation = 0;
};

Texture make_texture(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x7e47u});
  Texture tex;
  for (std::size_t i = 0; i < 3; ++i) {
    tex.fx[i] = rng.uniform(2.0, 7.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    tex.fy[i] = rng.uniform(2.0, 7.0);
    tex.ph[i] = rng.uniform(0.0, 2 * std::numbers::pi);
  }
  tex.striation = rng.uniform(0.0, 2 * std::numbers::pi);
  return tex;
}

// Per-clip placement and tint of the background; identity when jitter is 0.
struct Scene {
  double cx = 0.5, cy = 0.5, scale = 1.0;
  Rgb tint{};
  double shift = 0;
};

Scene make_scene(double jitter, std::uint64_t seed) {
  Scene s;
  if (jitter <= 0) return s;
  Rng rng = Rng::derive(seed, {0xB6u});
  s.cx = 0.5 + jitter * rng.uniform(-0.12, 0.12);
  s.cy = 0.5 + jitter * rng.uniform(-0.12, 0.12);
  s.scale = 1.0 + jitter * rng.uniform(-0.15, 0.15);
  for (auto& c : s.tint) c = jitter * rng.uniform(-0.08, 0.08);
  s.shift = jitter * rng.uniform(0.0, 2 * std::numbers::pi);
  return s;
}

Rgb background(const Texture& tex, const Scene& scene, double x, double y) {
  const double dx = (x - scene.cx) / scene.scale, dy = (y - scene.cy) / scene.scale;
  const double r = std::hypot(dx, dy);
  Rgb base;
  double amp = 0.07;
  if (r < 0.12) {
    base = {0.34, 0.30, 0.26};  // lens
    amp = 0.05;
  } else if (r < 0.24) {
    base = {0.48, 0.33, 0.18};  // iris
  } else if (r < 0.42) {
    base = {0.86, 0.78, 0.72};  // sclera
  } else {
    base = {0.55, 0.36, 0.28};  // surrounding skin
  }
  double wave = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    wave += std::sin(2 * std::numbers::pi * (tex.fx[i] * x + tex.fy[i] * y) + tex.ph[i] + scene.shift) / 3.0;
  }
  if (r >= 0.12 && r < 0.24) wave += 0.8 * std::sin(20.0 * std::atan2(dy, dx) + tex.striation + scene.shift);
  Rgb out;
  for (std::size_t c = 0; c < 3; ++c) {
    out[c] = base[c] + scene.tint[c] + amp * wave * (1.0 - 0.2 * static_cast<double>(c));
  }
  return out;
}

}  // namespace

VideoClip generate_clip(const SynthConfig& cfg, const PhaseLabel& phase, std::uint64_t seed) {
  cfg.validate();
  if (phase.class_index >= cfg.num_phases) {
    throw ConfigError("phase " + std::to_string(phase.class_index) + " outside " + std::to_string(cfg.num_phases) +
                      " phases");
  }
  const PhaseStyle style = style_for_phase(cfg, phase.class_index);
  Rng rng = Rng::derive(seed, {phase.class_index});

  std::vector<Instrument> instruments;
  {
    Instrument main;
    main.shape = style.shape;
    main.color = style.color;
    main.size = rng.uniform(0.9, 1.1);
    const double m = shape_radius(main.shape) * main.size + 0.02;
    main.x0 = rng.uniform(m, 1.0 - m);
    main.y0 = rng.uniform(m, 1.0 - m);
    main.phase0 = rng.uniform(0.0, 2 * std::numbers::pi);
    main.orient0 = style.direction + rng.uniform(-0.2, 0.2);
    instruments.push_back(main);
  }
  if (style.secondary) {
    Instrument aux;
    aux.shape = "disk";
    aux.color = cfg.color_coded_phases ? style.color : Rgb{0.92, 0.92, 0.96};
    aux.size = rng.uniform(0.55, 0.65);
    const double m = shape_radius(aux.shape) * aux.size + 0.02;
    aux.x0 = rng.uniform(m, 1.0 - m);
    aux.y0 = rng.uniform(m, 1.0 - m);
    aux.phase0 = rng.uniform(0.0, 2 * std::numbers::pi);
    instruments.push_back(aux);
  }
  const double speed = style.speed * rng.uniform(0.85, 1.15);

  const Texture tex = make_texture(cfg.background_texture_seed);
  const Scene scene = make_scene(cfg.background_jitter, seed);
  VideoClip clip = VideoClip::blank(cfg.frames, 3, cfg.height, cfg.width);
  clip.source_id = "synth:" + phase_name(phase.class_index) + ":" + std::to_string(seed);
  clip.foreground.assign(cfg.frames * cfg.height * cfg.width, 0);

  for (std::size_t t = 0; t < cfg.frames; ++t) {
    std::vector<Placement> where;
    for (std::size_t i = 0; i < instruments.size(); ++i) {
      // The secondary instrument trails the main one's motion pattern, half speed.
      where.push_back(place(style, instruments[i], t, i == 0 ? speed : -0.5 * speed));
    }
    for (std::size_t h = 0; h < cfg.height; ++h) {
      const double y = (static_cast<double>(h) + 0.5) / static_cast<double>(cfg.height);
      for (std::size_t w = 0; w < cfg.width; ++w) {
        const double x = (static_cast<double>(w) + 0.5) / static_cast<double>(cfg.width);
        Rgb px = background(tex, scene, x, y);
        for (std::size_t i = 0; i < instruments.size(); ++i) {
          double along = 0;
          if (covers(instruments[i].shape, x - where[i].x, y - where[i].y, where[i].orient, instruments[i].size,
                     along)) {
            const double shade = 0.82 + 0.18 * std::clamp(along, -1.0, 1.0);
            for (std::size_t c = 0; c < 3; ++c) px[c] = instruments[i].color[c] * shade;
            clip.foreground[(t * cfg.height + h) * cfg.width + w] = 1;
          }
        }
        for (std::size_t c = 0; c < 3; ++c) {
          double v = px[c];
          if (cfg.noise_sigma > 0) v += cfg.noise_sigma * rng.normal();
          clip.at(t, c, h, w) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
  }
  return clip;
}

std::uint64_t clip_seed(std::uint64_t corpus_seed, std::size_t index) {
  return Rng::derive(corpus_seed, {0xC11Bu, index}).next();
}

std::size_t labeled_clip_count(std::size_t n_clips, double label_fraction) {
  if (!(label_fraction > 0.0) || label_fraction > 1.0) {
    throw ConfigError("label_fraction must be in (0, 1], got " + std::to_string(label_fraction));
  }
  // Guard against 0.1*120 = 12.000000000000002 style representation error.
  const double exact = label_fraction * static_cast<double>(n_clips);
  return static_cast<std::size_t>(std::ceil(exact - 1e-9));
}

fs::path Manifest::mask_path(std::size_t i) const {
  fs::path p = clip_path(i);
  p.replace_extension(".fg");
  return p;
}

std::size_t Manifest::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.labeled; }));
}

Manifest generate_corpus(const SynthConfig& cfg, std::size_t n_clips, double label_fraction, std::uint64_t seed,
                         const fs::path& out_dir) {
  cfg.validate();
  if (n_clips == 0) throw ConfigError("n_clips must be positive");
  const std::size_t labeled = labeled_clip_count(n_clips, label_fraction);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create output directory " + out_dir.string());

  Manifest manifest;
  manifest.base_dir = out_dir;
  for (std::size_t i = 0; i < n_clips; ++i) {
    ManifestEntry entry;
    std::ostringstream name;
    name << "clip_" << std::setw(4) << std::setfill('0') << i << ".csvc";
    entry.path = name.str();
    entry.phase_index = i % cfg.num_phases;
    entry.phase_name = phase_name(entry.phase_index);
    entry.labeled = i < labeled;
    const VideoClip clip = generate_clip(cfg, {entry.phase_index, entry.phase_name}, clip_seed(seed, i));
    manifest.entries.push_back(entry);
    save_clip(clip, manifest.clip_path(i));
    save_foreground_mask(clip, manifest.mask_path(i));
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw FormatError("manifest " + path.string() + " must be a JSON array");
  Manifest m;
  m.base_dir = path.parent_path();
  for (const auto& item : doc) {
    try {
      ManifestEntry e;
      e.path = item.at("path").get<std::string>();
      e.phase_index = item.at("phase_index").get<std::size_t>();
      e.phase_name = item.at("phase_name").get<std::string>();
      e.labeled = item.at("labeled").get<bool>();
      m.entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest " + path.string() + ": " + e.what());
    }
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    doc.push_back({{"path", e.path}, {"phase_index", e.phase_index}, {"phase_name", e.phase_name}, {"labeled", e.labeled}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

void save_clip(const VideoClip& clip, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write clip " + path.string());
  out.write("CSVC", 4);
  binary::write_le<std::uint32_t>(out, 1);
  for (std::size_t d : {clip.frames, clip.channels, clip.height, clip.width}) {
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  std::vector<unsigned char> bytes(clip.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(clip.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing clip " + path.string());
}

namespace {

std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t expected, const fs::path& path) {
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(start);
  const auto available = static_cast<std::size_t>(end - start);
  if (available != expected) {
    throw FormatError(path.string() + ": header declares " + std::to_string(expected) + " payload bytes, file holds " +
                      std::to_string(available));
  }
  std::vector<unsigned char> bytes(expected);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected));
  if (!in) throw FormatError(path.string() + ": truncated payload");
  return bytes;
}

}  // namespace

VideoClip load_raw_clip(const fs::path& path, const ClipLayout& layout) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read clip " + path.string());
  binary::expect_magic(in, "CSVC", path.string());
  const auto version = binary::read_le<std::uint32_t>(in, "clip version");
  if (version != 1) throw FormatError(path.string() + ": unsupported clip version " + std::to_string(version));
  std::size_t dims[4];
  for (auto& d : dims) d = binary::read_le<std::uint32_t>(in, "clip header");
  if (dims[0] == 0 || dims[1] == 0 || dims[2] == 0 || dims[3] == 0) throw FormatError(path.string() + ": zero dimension");
  VideoClip clip = VideoClip::blank(dims[0], dims[1], dims[2], dims[3]);
  clip.source_id = path.filename().string();
  const auto bytes = read_payload(in, clip.pixels.size(), path);
  for (std::size_t i = 0; i < bytes.size(); ++i) clip.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  if (layout.center_crop) clip = center_crop_square(clip);
  if (layout.target_height != 0 && layout.target_width != 0 &&
      (layout.target_height != clip.height || layout.target_width != clip.width)) {
    clip = resize_bilinear(clip, layout.target_height, layout.target_width);
  }
  return clip;
}

void save_foreground_mask(const VideoClip& clip, const fs::path& path) {
  if (clip.foreground.size() != clip.frames * clip.height * clip.width) {
    throw ContractError("clip carries no foreground mask to save");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mask " + path.string());
  out.write("CSFG", 4);
  binary::write_le<std::uint32_t>(out, 1);
  for (std::size_t d : {clip.frames, clip.height, clip.width}) {
    binary::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.write(reinterpret_cast<const char*>(clip.foreground.data()), static_cast<std::streamsize>(clip.foreground.size()));
  if (!out) throw IoError("failed writing mask " + path.string());
}

void load_foreground_mask(const fs::path& path, VideoClip& clip) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read mask " + path.string());
  binary::expect_magic(in, "CSFG", path.string());
  binary::read_le<std::uint32_t>(in, "mask version");
  std::size_t dims[3];
  for (auto& d : dims) d = binary::read_le<std::uint32_t>(in, "mask header");
  if (dims[0] != clip.frames || dims[1] != clip.height || dims[2] != clip.width) {
    throw FormatError(path.string() + ": mask geometry does not match its clip");
  }
  const auto bytes = read_payload(in, dims[0] * dims[1] * dims[2], path);
  clip.foreground.assign(bytes.begin(), bytes.end());
}

VideoClip resize_bilinear(const VideoClip& clip, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ConfigError("resize target must be positive");
  VideoClip out = VideoClip::blank(clip.frames, clip.channels, height, width);
  out.fps = clip.fps;
  out.source_id = clip.source_id;
  const double sy = static_cast<double>(clip.height) / static_cast<double>(height);
  const double sx = static_cast<double>(clip.width) / static_cast<double>(width);
  for (std::size_t h = 0; h < height; ++h) {
    // Half-pixel centers, clamped at the borders.
    const double fy = std::clamp((static_cast<double>(h) + 0.5) * sy - 0.5, 0.0, static_cast<double>(clip.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, clip.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t w = 0; w < width; ++w) {
      const double fx = std::clamp((static_cast<double>(w) + 0.5) * sx - 0.5, 0.0, static_cast<double>(clip.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, clip.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t t = 0; t < clip.frames; ++t) {
        for (std::size_t c = 0; c < clip.channels; ++c) {
          const double top = (1 - wx) * clip.at(t, c, y0, x0) + wx * clip.at(t, c, y0, x1);
          const double bottom = (1 - wx) * clip.at(t, c, y1, x0) + wx * clip.at(t, c, y1, x1);
          out.at(t, c, h, w) = static_cast<float>((1 - wy) * top + wy * bottom);
        }
      }
    }
  }
  return out;
}

VideoClip center_crop_square(const VideoClip& clip) {
  const std::size_t side = std::min(clip.height, clip.width);
  const std::size_t top = (clip.height - side) / 2, left = (clip.width - side) / 2;
  VideoClip out = VideoClip::blank(clip.frames, clip.channels, side, side);
  out.fps = clip.fps;
  out.source_id = clip.source_id;
  for (std::size_t t = 0; t < clip.frames; ++t)
    for (std::size_t c = 0; c < clip.channels; ++c)
      for (std::size_t h = 0; h < side; ++h)
        for (std::size_t w = 0; w < side; ++w) out.at(t, c, h, w) = clip.at(t, c, top + h, left + w);
  return out;
}

PatchTargets patch_normalize_targets(const VideoClip& clip, const TokenizerConfig& cfg, bool normalize, float eps) {
  Tensor raw = unfold_patches(clip, cfg);
  const std::size_t n = raw.rows(), len = raw.cols();
  PatchTargets targets;
  targets.normalized = normalize;
  targets.stats.eps = eps;
  targets.stats.mean.assign(n, 0.0f);
  targets.stats.std.assign(n, 0.0f);
  auto values = raw.data();
  for (std::size_t i = 0; i < n; ++i) {
    Real* row = values.data() + i * len;
    double mu = 0;
    for (std::size_t j = 0; j < len; ++j) mu += row[j];
    mu /= static_cast<double>(len);
    double var = 0;
    for (std::size_t j = 0; j < len; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(len);
    const double sd = std::sqrt(var);
    targets.stats.mean[i] = static_cast<float>(mu);
    targets.stats.std[i] = static_cast<float>(sd);
    if (normalize) {
      for (std::size_t j = 0; j < len; ++j) row[j] = static_cast<Real>((row[j] - mu) / (sd + eps));
    }
  }
  targets.values = raw;
  return targets;
}

std::vector<std::uint8_t> foreground_tokens(const VideoClip& clip, const TokenizerConfig& cfg) {
  const GridMeta g = grid_for(clip, cfg);
  std::vector<std::uint8_t> out(g.tokens(), 0);
  if (clip.foreground.empty()) return out;
  for (std::size_t id = 0; id < g.tokens(); ++id) {
    const CellCoord cell = g.cell(id);
    bool any = false;
    for (std::size_t dt = 0; dt < cfg.tubelet_t && !any; ++dt)
      for (std::size_t dh = 0; dh < cfg.tubelet_h && !any; ++dh)
        for (std::size_t dw = 0; dw < cfg.tubelet_w && !any; ++dw)
          any = clip.is_foreground(cell.t * cfg.tubelet_t + dt, cell.h * cfg.tubelet_h + dh, cell.w * cfg.tubelet_w + dw);
    out[id] = any ? 1 : 0;
  }
  return out;
}

}  // namespace csmae
