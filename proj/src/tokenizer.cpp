#include "csmae/tokenizer.hpp"

#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "csmae/errors.hpp"
#include "csmae/ops.hpp"

namespace csmae {

void TokenizerConfig::validate() const {
  if (tubelet_t == 0 || tubelet_h == 0 || tubelet_w == 0) throw ConfigError("tubelet dims must be positive");
  if (dim == 0 || dim % 2 != 0) throw ConfigError("token dim must be a positive even number, got " + std::to_string(dim));
  if (channels == 0) throw ConfigError("channel count must be positive");
}

CellCoord GridMeta::cell(std::size_t id) const {
  if (id >= tokens()) {
    throw IndexError("token id " + std::to_string(id) + " out of range for " + std::to_string(tokens()) + " tokens");
  }
  CellCoord c;
  c.w = id % grid_w;
  c.h = (id / grid_w) % grid_h;
  c.t = id / (grid_w * grid_h);
  return c;
}

GridMeta grid_for(const VideoClip& clip, const TokenizerConfig& cfg) {
  cfg.validate();
  auto check = [](std::size_t extent, std::size_t tubelet, const char* axis) {
    if (extent == 0 || extent % tubelet != 0) {
      throw ConfigError(std::string("axis ") + axis + " of size " + std::to_string(extent) +
                        " is not divisible by tubelet size " + std::to_string(tubelet));
    }
  };
  check(clip.frames, cfg.tubelet_t, "T");
  check(clip.height, cfg.tubelet_h, "H");
  check(clip.width, cfg.tubelet_w, "W");
  if (clip.channels != cfg.channels) {
    throw ConfigError("clip has " + std::to_string(clip.channels) + " channels, tokenizer expects " +
                      std::to_string(cfg.channels));
  }
  GridMeta g;
  g.grid_t = clip.frames / cfg.tubelet_t;
  g.grid_h = clip.height / cfg.tubelet_h;
  g.grid_w = clip.width / cfg.tubelet_w;
  g.tubelet_t = cfg.tubelet_t;
  g.tubelet_h = cfg.tubelet_h;
  g.tubelet_w = cfg.tubelet_w;
  return g;
}

TokenizerParams make_tokenizer_params(ParamSet& params, const TokenizerConfig& cfg, Rng& rng) {
  cfg.validate();
  TokenizerParams p;
  p.projection = nn::make_linear(params, "tok.proj", cfg.patch_length(), cfg.dim, rng);
  return p;
}

Tensor unfold_patches(const VideoClip& clip, const TokenizerConfig& cfg) {
  const GridMeta g = grid_for(clip, cfg);
  const std::size_t len = cfg.patch_length();
  std::vector<Real> out(g.tokens() * len);
  for (std::size_t id = 0; id < g.tokens(); ++id) {
    const CellCoord cell = g.cell(id);
    Real* dst = out.data() + id * len;
    for (std::size_t c = 0; c < clip.channels; ++c)
      for (std::size_t dt = 0; dt < cfg.tubelet_t; ++dt)
        for (std::size_t dh = 0; dh < cfg.tubelet_h; ++dh)
          for (std::size_t dw = 0; dw < cfg.tubelet_w; ++dw)
            *dst++ = clip.at(cell.t * cfg.tubelet_t + dt, c, cell.h * cfg.tubelet_h + dh, cell.w * cfg.tubelet_w + dw);
  }
  return Tensor({g.tokens(), len}, std::move(out));
}

Tensor positional_encoding(std::size_t tokens, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("positional encoding needs an even dim, got " + std::to_string(dim));
  thread_local std::map<std::pair<std::size_t, std::size_t>, std::vector<Real>> cache;
  auto [it, inserted] = cache.try_emplace({tokens, dim});
  if (inserted) {
    auto& table = it->second;
    table.resize(tokens * dim);
    for (std::size_t i = 0; i < tokens; ++i) {
      for (std::size_t j = 0; j < dim / 2; ++j) {
        const double angle = static_cast<double>(i) / std::pow(10000.0, 2.0 * static_cast<double>(j) / dim);
        table[i * dim + 2 * j] = static_cast<Real>(std::sin(angle));
        table[i * dim + 2 * j + 1] = static_cast<Real>(std::cos(angle));
      }
    }
  }
  return Tensor({tokens, dim}, it->second);
}

Tensor embed_patches(const Tensor& patches, const TokenizerConfig& cfg, const TokenizerParams& params) {
  if (patches.cols() != cfg.patch_length()) {
    throw ConfigError("patch length " + std::to_string(patches.cols()) + " does not match tokenizer " +
                      std::to_string(cfg.patch_length()));
  }
  Tensor tokens = params.projection(patches);
  if (!cfg.positional_encoding) return tokens;
  return ops::add(tokens, positional_encoding(patches.rows(), cfg.dim));
}

TokenGrid tokenize(const VideoClip& clip, const TokenizerConfig& cfg, const TokenizerParams& params) {
  TokenGrid grid;
  grid.grid = grid_for(clip, cfg);
  grid.tokens = embed_patches(unfold_patches(clip, cfg), cfg, params);
  return grid;
}

ClipOverlay ClipOverlay::empty(const GridMeta& grid, std::size_t channels) {
  ClipOverlay o;
  o.grid = grid;
  o.clip = VideoClip::blank(grid.grid_t * grid.tubelet_t, channels, grid.grid_h * grid.tubelet_h,
                            grid.grid_w * grid.tubelet_w);
  o.written.assign(grid.tokens(), 0);
  return o;
}

void detokenize_patches(std::span<const float> values, std::span<const std::size_t> ids,
                        const TokenizerConfig& cfg, const PatchStats* stats, ClipOverlay& overlay) {
  const std::size_t len = cfg.patch_length();
  if (values.size() != ids.size() * len) {
    throw DimensionError("detokenize: " + std::to_string(values.size()) + " values for " +
                         std::to_string(ids.size()) + " tokens of length " + std::to_string(len));
  }
  const GridMeta& g = overlay.grid;
  VideoClip& clip = overlay.clip;
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const std::size_t id = ids[r];
    const CellCoord cell = g.cell(id);  // throws IndexError when out of range
    float mean = 0.0f, scale = 1.0f;
    if (stats != nullptr) {
      mean = stats->mean.at(id);
      scale = stats->std.at(id) + stats->eps;
    }
    const float* src = values.data() + r * len;
    for (std::size_t c = 0; c < clip.channels; ++c)
      for (std::size_t dt = 0; dt < g.tubelet_t; ++dt)
        for (std::size_t dh = 0; dh < g.tubelet_h; ++dh)
          for (std::size_t dw = 0; dw < g.tubelet_w; ++dw)
            clip.at(cell.t * g.tubelet_t + dt, c, cell.h * g.tubelet_h + dh, cell.w * g.tubelet_w + dw) =
                *src++ * scale + mean;
    overlay.written[id] = 1;
  }
}

}  // namespace csmae
