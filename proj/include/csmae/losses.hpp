#pragma once

#include <string>

#include "csmae/masking.hpp"
#include "csmae/tensor.hpp"

namespace csmae {

enum class LossKind { mse, l1 };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

struct ReconstructionLoss {
  Tensor total;      // scalar L_R
  Tensor per_token;  // [|masked| × 1], L_iR
};

// L_iR = mean over the patch vector of squared (mse) or absolute (l1) error;
// L_R = (1/(N-M)) * sum_i L_iR over the masked tokens.
ReconstructionLoss reconstruction_loss(const Tensor& predictions, const Tensor& targets, LossKind kind);

// Score-function selection loss: -(1/|masked|) * sum_{i in masked} log P_i * L_iR.
// `per_token_errors` must be detached; a tensor that still requires grad is rejected.
Tensor selection_loss(const Tensor& log_probs, const Tensor& per_token_errors, const MaskSpec& spec);

}  // namespace csmae
