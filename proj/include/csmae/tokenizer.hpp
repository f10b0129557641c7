#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "csmae/clip.hpp"
#include "csmae/nn.hpp"
#include "csmae/tensor.hpp"

namespace csmae {

struct TokenizerConfig {
  std::size_t tubelet_t = 2;
  std::size_t tubelet_h = 4;
  std::size_t tubelet_w = 4;
  std::size_t dim = 64;
  std::size_t channels = 3;
  bool positional_encoding = true;

  std::size_t patch_length() const { return tubelet_t * tubelet_h * tubelet_w * channels; }
  void validate() const;
};

struct CellCoord {
  std::size_t t = 0, h = 0, w = 0;
  bool operator==(const CellCoord&) const = default;
};

// Token grid geometry; ids run t-major, then h, then w.
struct GridMeta {
  std::size_t grid_t = 0, grid_h = 0, grid_w = 0;
  std::size_t tubelet_t = 1, tubelet_h = 1, tubelet_w = 1;

  std::size_t tokens() const { return grid_t * grid_h * grid_w; }
  std::size_t spatial_cells() const { return grid_h * grid_w; }
  CellCoord cell(std::size_t id) const;
  std::size_t id(CellCoord c) const { return (c.t * grid_h + c.h) * grid_w + c.w; }
};

// Throws ConfigError naming the axis that is not divisible by the tubelet.
GridMeta grid_for(const VideoClip& clip, const TokenizerConfig& cfg);

struct TokenizerParams {
  nn::Linear projection;  // [patch_length × dim]
};

TokenizerParams make_tokenizer_params(ParamSet& params, const TokenizerConfig& cfg, Rng& rng);

struct TokenGrid {
  Tensor tokens;  // [N × dim]
  GridMeta grid;
};

// Flattened tubelets [N × patch_length]; per-token vector ordered (c, dt, dh, dw),
// the layout of a 3-D convolution kernel.
Tensor unfold_patches(const VideoClip& clip, const TokenizerConfig& cfg);

// Fixed sinusoidal table over the flattened token index: pe[i,2j]=sin(i/10000^(2j/k)),
// pe[i,2j+1]=cos(i/10000^(2j/k)).
Tensor positional_encoding(std::size_t tokens, std::size_t dim);

// Projection of pre-extracted patches plus positional encoding.
Tensor embed_patches(const Tensor& patches, const TokenizerConfig& cfg, const TokenizerParams& params);

// Equivalent to a stride=kernel 3-D convolution over the clip followed by positional encoding.
TokenGrid tokenize(const VideoClip& clip, const TokenizerConfig& cfg, const TokenizerParams& params);

// Per-token raw mean/std kept so normalized values can be mapped back to pixels.
struct PatchStats {
  std::vector<float> mean;
  std::vector<float> std;
  float eps = 1e-6f;
};

// Partially reconstructed clip plus a per-token flag of which cells were written.
struct ClipOverlay {
  VideoClip clip;
  GridMeta grid;
  std::vector<std::uint8_t> written;

  static ClipOverlay empty(const GridMeta& grid, std::size_t channels);
};

// Writes token pixel vectors (rows of `values`, length patch_length) into their
// tubelet cells. With `stats`, rows are de-normalized first: x*(std+eps)+mean.
void detokenize_patches(std::span<const float> values, std::span<const std::size_t> ids,
                        const TokenizerConfig& cfg, const PatchStats* stats, ClipOverlay& overlay);

}  // namespace csmae
