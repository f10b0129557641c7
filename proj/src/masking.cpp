#include "csmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csmae/errors.hpp"
#include "csmae/ops.hpp"

namespace csmae {

namespace {

void require_ratio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("masking ratio must be in (0, 1), got " + std::to_string(ratio));
}

std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9)); }

std::vector<std::size_t> uniform_subset(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) std::swap(ids[i], ids[i + rng.below(n - i)]);
  ids.resize(count);
  return ids;
}

}  // namespace

std::size_t visible_token_count(std::size_t num_tokens, double ratio) {
  const std::size_t masked = round_half_up(ratio * static_cast<double>(num_tokens));
  return masked >= num_tokens ? 1 : std::max<std::size_t>(1, num_tokens - masked);
}

MaskSpec MaskSpec::from_visible(std::size_t num_tokens, std::vector<std::size_t> visible_ids, double ratio) {
  MaskSpec spec;
  spec.ratio = ratio;
  spec.num_tokens = num_tokens;
  std::sort(visible_ids.begin(), visible_ids.end());
  if (std::adjacent_find(visible_ids.begin(), visible_ids.end()) != visible_ids.end()) {
    throw ContractError("visible ids must be unique");
  }
  if (!visible_ids.empty() && visible_ids.back() >= num_tokens) {
    throw IndexError("visible id " + std::to_string(visible_ids.back()) + " out of range");
  }
  spec.visible = std::move(visible_ids);
  std::vector<std::uint8_t> is_visible(num_tokens, 0);
  for (std::size_t id : spec.visible) is_visible[id] = 1;
  for (std::size_t id = 0; id < num_tokens; ++id) {
    if (!is_visible[id]) spec.masked.push_back(id);
  }
  return spec;
}

MaskSpec MaskSpec::all_visible(std::size_t num_tokens) {
  std::vector<std::size_t> ids(num_tokens);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return from_visible(num_tokens, std::move(ids), 0.0);
}

void MaskSpec::validate() const {
  if (visible.empty()) throw ContractError("mask spec has no visible tokens");
  if (visible.size() + masked.size() != num_tokens) throw ContractError("mask spec does not cover all tokens");
  std::vector<std::uint8_t> seen(num_tokens, 0);
  auto mark = [&](const std::vector<std::size_t>& ids, const char* which) {
    if (!std::is_sorted(ids.begin(), ids.end())) throw ContractError(std::string(which) + " ids not sorted");
    for (std::size_t id : ids) {
      if (id >= num_tokens) throw ContractError(std::string(which) + " id out of range");
      if (seen[id]) throw ContractError("token " + std::to_string(id) + " appears twice in mask spec");
      seen[id] = 1;
    }
  };
  mark(visible, "visible");
  mark(masked, "masked");
}

MaskStrategy parse_strategy(const std::string& name) {
  if (name == "adaptive") return MaskStrategy::adaptive;
  if (name == "random") return MaskStrategy::random;
  if (name == "tube") return MaskStrategy::tube;
  if (name == "frame") return MaskStrategy::frame;
  throw ConfigError("unknown masking strategy '" + name + "' (expected adaptive, random, tube or frame)");
}

std::string to_string(MaskStrategy strategy) {
  switch (strategy) {
    case MaskStrategy::adaptive: return "adaptive";
    case MaskStrategy::random: return "random";
    case MaskStrategy::tube: return "tube";
    case MaskStrategy::frame: return "frame";
  }
  return "unknown";
}

SelectionParams make_selection_params(ParamSet& params, const SelectionConfig& cfg, Rng& rng) {
  if (cfg.heads == 0 || cfg.dim % cfg.heads != 0) {
    throw ConfigError("selection dim " + std::to_string(cfg.dim) + " not divisible by " + std::to_string(cfg.heads) +
                      " heads");
  }
  SelectionParams p;
  p.heads = cfg.heads;
  p.dim = cfg.dim;
  p.norm = nn::make_layer_norm(params, "sel.norm", cfg.dim);
  p.qkv = nn::make_linear(params, "sel.qkv", cfg.dim, 3 * cfg.dim, rng);
  p.proj = nn::make_linear(params, "sel.proj", cfg.dim, cfg.dim, rng);
  p.score = nn::make_linear(params, "sel.score", cfg.dim, 1, rng);
  return p;
}

ProbabilityMap select_probabilities(const Tensor& tokens, const SelectionParams& params) {
  if (tokens.ndim() != 2 || tokens.cols() != params.dim) {
    throw ConfigError("selection network expects tokens of dim " + std::to_string(params.dim) + ", got " +
                      shape_str(tokens.shape()));
  }
  const Tensor hidden = ops::add(tokens, nn::self_attention(params.qkv, params.proj, params.heads, params.norm(tokens)));
  ProbabilityMap map;
  map.logits = params.score(hidden);
  map.log_probs = ops::log_softmax(map.logits, 0);
  const auto lp = map.log_probs.data();
  map.probs.resize(lp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) map.probs[i] = std::exp(static_cast<double>(lp[i]));
  return map;
}

MaskSpec sample_visible(std::span<const double> probs, double ratio, Rng& rng) {
  require_ratio(ratio);
  const std::size_t n = probs.size();
  if (n == 0) throw ConfigError("cannot sample from an empty distribution");
  const std::size_t m = visible_token_count(n, ratio);
  std::vector<std::pair<double, std::size_t>> keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng.gumbel();
    keys[i] = {probs[i] > 0 ? std::log(probs[i]) + g : -INFINITY, i};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(m), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<std::size_t> visible(m);
  for (std::size_t i = 0; i < m; ++i) visible[i] = keys[i].second;
  return MaskSpec::from_visible(n, std::move(visible), ratio);
}

MaskSpec baseline_mask(MaskStrategy strategy, const GridMeta& grid, double ratio, Rng& rng) {
  require_ratio(ratio);
  const std::size_t n = grid.tokens();
  switch (strategy) {
    case MaskStrategy::random:
      return MaskSpec::from_visible(n, uniform_subset(n, visible_token_count(n, ratio), rng), ratio);
    case MaskStrategy::tube: {
      const std::size_t cells = grid.spatial_cells();
      const auto spatial = uniform_subset(cells, visible_token_count(cells, ratio), rng);
      std::vector<std::size_t> visible;
      for (std::size_t t = 0; t < grid.grid_t; ++t) {
        for (std::size_t cell : spatial) visible.push_back(t * cells + cell);
      }
      return MaskSpec::from_visible(n, std::move(visible), ratio);
    }
    case MaskStrategy::frame: {
      const std::size_t keep = round_half_up((1.0 - ratio) * static_cast<double>(grid.grid_t));
      if (keep < 1) {
        throw ConfigError("frame masking at ratio " + std::to_string(ratio) + " leaves no visible slice out of " +
                          std::to_string(grid.grid_t));
      }
      const std::size_t slices = std::min(keep, grid.grid_t);
      const auto kept = uniform_subset(grid.grid_t, slices, rng);
      std::vector<std::size_t> visible;
      const std::size_t cells = grid.spatial_cells();
      for (std::size_t t : kept) {
        for (std::size_t cell = 0; cell < cells; ++cell) visible.push_back(t * cells + cell);
      }
      if (visible.size() == n) throw ConfigError("frame masking at ratio " + std::to_string(ratio) + " masks nothing");
      return MaskSpec::from_visible(n, std::move(visible), ratio);
    }
    case MaskStrategy::adaptive:
      break;
  }
  throw ConfigError("adaptive masking needs a probability map; use sample_visible");
}

}  // namespace csmae
