#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csmae/clip.hpp"
#include "csmae/tokenizer.hpp"

namespace csmae {

struct PhaseLabel {
  std::size_t class_index = 0;
  std::string class_name;
};

std::string phase_name(std::size_t index);

struct SynthConfig {
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_phases = 12;
  // Foreground speed in frame widths per frame.
  double motion_speed_min = 0.02;
  double motion_speed_max = 0.06;
  std::vector<std::string> shape_palette = {"bar", "disk", "rect", "ring"};
  std::uint64_t background_texture_seed = 7;
  // Per-clip variation of the background (placement, scale, tint, texture phase); 0 = identical.
  double background_jitter = 0.3;
  double noise_sigma = 0.01;
  // Toy mode: each phase gets its own constant foreground colour.
  bool color_coded_phases = false;

  void validate() const;
};

// Static eye-like textured background plus 1–2 moving instrument shapes whose
// shape, trajectory and speed depend on the phase. Deterministic in (cfg, phase, seed);
// fills VideoClip::foreground with the exact shape coverage.
VideoClip generate_clip(const SynthConfig& cfg, const PhaseLabel& phase, std::uint64_t seed);

// Seed used for clip `index` of a corpus generated with `corpus_seed`.
std::uint64_t clip_seed(std::uint64_t corpus_seed, std::size_t index);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::size_t phase_index = 0;
  std::string phase_name;
  bool labeled = false;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path clip_path(std::size_t i) const { return base_dir / entries.at(i).path; }
  // Companion foreground-mask file, if the generator wrote one.
  std::filesystem::path mask_path(std::size_t i) const;
  std::size_t labeled_count() const;
};

// Writes clip_NNNN.csvc (+ .fg masks) and manifest.json into out_dir. Phases are
// assigned round-robin; the first ceil(label_fraction*n_clips) clips are labeled.
Manifest generate_corpus(const SynthConfig& cfg, std::size_t n_clips, double label_fraction, std::uint64_t seed,
                         const std::filesystem::path& out_dir);

std::size_t labeled_clip_count(std::size_t n_clips, double label_fraction);

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// CSVC clip files: "CSVC", u32 version, u32 T,C,H,W (little-endian), then T*C*H*W
// 8-bit pixels in T, C, row order.
void save_clip(const VideoClip& clip, const std::filesystem::path& path);

// Optional geometry applied after decoding.
struct ClipLayout {
  std::size_t target_height = 0;  // 0 keeps the stored size
  std::size_t target_width = 0;
  bool center_crop = false;  // crop to a centered square before resizing
};

VideoClip load_raw_clip(const std::filesystem::path& path, const ClipLayout& layout = {});

// CSFG mask files: "CSFG", u32 version, u32 T,H,W, then T*H*W bytes (0/1).
void save_foreground_mask(const VideoClip& clip, const std::filesystem::path& path);
void load_foreground_mask(const std::filesystem::path& path, VideoClip& clip);

VideoClip resize_bilinear(const VideoClip& clip, std::size_t height, std::size_t width);
VideoClip center_crop_square(const VideoClip& clip);

struct PatchTargets {
  Tensor values;  // [N × patch_length]
  PatchStats stats;
  bool normalized = true;
};

// Per-token reconstruction targets; with `normalize`, (x - mean) / (std + eps).
PatchTargets patch_normalize_targets(const VideoClip& clip, const TokenizerConfig& cfg, bool normalize,
                                     float eps = 1e-6f);

// Token ids whose tubelet contains at least one foreground pixel, as a 0/1 vector.
std::vector<std::uint8_t> foreground_tokens(const VideoClip& clip, const TokenizerConfig& cfg);

}  // namespace csmae
