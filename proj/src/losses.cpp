#include "csmae/losses.hpp"

#include "csmae/errors.hpp"
#include "csmae/ops.hpp"

namespace csmae {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "mse") return LossKind::mse;
  if (name == "l1") return LossKind::l1;
  throw ConfigError("unknown loss kind '" + name + "' (expected mse or l1)");
}

std::string to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "l1"; }

ReconstructionLoss reconstruction_loss(const Tensor& predictions, const Tensor& targets, LossKind kind) {
  if (predictions.shape() != targets.shape() || predictions.ndim() != 2) {
    throw ContractError("reconstruction loss: predictions " + shape_str(predictions.shape()) + " vs targets " +
                        shape_str(targets.shape()));
  }
  const Tensor diff = ops::sub(predictions, targets);
  const Tensor err = kind == LossKind::mse ? ops::square(diff) : ops::abs(diff);
  ReconstructionLoss out;
  out.per_token = ops::mean(err, 1);
  out.total = ops::mean(out.per_token);
  return out;
}

Tensor selection_loss(const Tensor& log_probs, const Tensor& per_token_errors, const MaskSpec& spec) {
  if (per_token_errors.requires_grad()) {
    throw ContractError("selection loss: per-token errors must be detached from the reconstruction graph");
  }
  if (log_probs.ndim() != 2 || log_probs.cols() != 1 || log_probs.rows() != spec.num_tokens) {
    throw ContractError("selection loss: log-probabilities " + shape_str(log_probs.shape()) + " do not cover " +
                        std::to_string(spec.num_tokens) + " tokens");
  }
  if (per_token_errors.numel() != spec.masked.size() || spec.masked.empty()) {
    throw ContractError("selection loss: " + std::to_string(per_token_errors.numel()) + " errors for " +
                        std::to_string(spec.masked.size()) + " masked tokens");
  }
  const Tensor weights = ops::reshape(per_token_errors, {spec.masked.size(), 1});
  const Tensor weighted = ops::mul(ops::gather_rows(log_probs, spec.masked), weights);
  return ops::scale(ops::mean(weighted), Real(-1));
}

}  // namespace csmae
