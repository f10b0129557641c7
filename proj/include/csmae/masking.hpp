#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csmae/nn.hpp"
#include "csmae/tokenizer.hpp"

namespace csmae {

// Partition of token ids into visible (encoder input) and masked (reconstructed).
struct MaskSpec {
  double ratio = 0.0;  // masked fraction
  std::size_t num_tokens = 0;
  std::vector<std::size_t> visible;  // sorted, unique
  std::vector<std::size_t> masked;   // sorted complement

  std::size_t visible_count() const { return visible.size(); }
  std::size_t masked_count() const { return masked.size(); }

  // Builds the complement of `visible_ids` (any order, must be unique and in range).
  static MaskSpec from_visible(std::size_t num_tokens, std::vector<std::size_t> visible_ids, double ratio);
  // Every token visible; used for fine-tuning and classification.
  static MaskSpec all_visible(std::size_t num_tokens);
  // Throws ContractError when the partition invariants do not hold.
  void validate() const;
};

// M = N - round_half_up(ratio * N), at least 1.
std::size_t visible_token_count(std::size_t num_tokens, double ratio);

enum class MaskStrategy { adaptive, random, tube, frame };

MaskStrategy parse_strategy(const std::string& name);
std::string to_string(MaskStrategy strategy);

struct SelectionConfig {
  std::size_t dim = 64;
  std::size_t heads = 2;
};

// Token Selection Network: pre-norm MHA with residual, then a linear scorer to one
// logit per token.
struct SelectionParams {
  nn::LayerNorm norm;
  nn::Linear qkv;
  nn::Linear proj;
  nn::Linear score;
  std::size_t heads = 2;
  std::size_t dim = 0;
};

SelectionParams make_selection_params(ParamSet& params, const SelectionConfig& cfg, Rng& rng);

struct ProbabilityMap {
  Tensor logits;     // [N×1]
  Tensor log_probs;  // [N×1], log-softmax over the N logits
  std::vector<double> probs;
};

ProbabilityMap select_probabilities(const Tensor& tokens, const SelectionParams& params);

// Draws visible_token_count(N, ratio) distinct ids without replacement from the
// categorical distribution `probs` via Gumbel top-M.
MaskSpec sample_visible(std::span<const double> probs, double ratio, Rng& rng);

// Non-adaptive masks: random (uniform ids), tube (one spatial pattern shared by every
// temporal slice), frame (whole temporal slices visible).
MaskSpec baseline_mask(MaskStrategy strategy, const GridMeta& grid, double ratio, Rng& rng);

}  // namespace csmae
