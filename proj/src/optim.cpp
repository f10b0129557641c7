#include "csmae/optim.hpp"

#include <cmath>
#include <numbers>

#include "csmae/errors.hpp"

namespace csmae {

Tensor& ParamSet::add(std::string name, Tensor tensor) {
  const bool decay = tensor.ndim() >= 2 && tensor.dim(0) > 1;
  return add(std::move(name), std::move(tensor), decay);
}

Tensor& ParamSet::add(std::string name, Tensor tensor, bool decay) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  tensor.set_requires_grad(true);
  params_.push_back({std::move(name), std::move(tensor), decay});
  return params_.back().tensor;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

Tensor* ParamSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void ParamSet::append(const ParamSet& other) {
  for (const auto& p : other) add(p.name, p.tensor, p.decay);
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

OptimizerState OptimizerState::for_params(const ParamSet& params, AdamWConfig config) {
  if (!(config.lr > 0)) throw ConfigError("AdamW learning rate must be positive");
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.tensor.numel(), Real(0));
    state.second_moment.emplace_back(p.tensor.numel(), Real(0));
  }
  return state;
}

void adamw_step(ParamSet& params, OptimizerState& state) {
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("optimizer state holds " + std::to_string(state.first_moment.size()) +
                         " moment buffers for " + std::to_string(params.size()) + " parameters");
  }
  const AdamWConfig& c = state.config;
  if (!(c.lr > 0)) throw ConfigError("AdamW learning rate must be positive");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i].tensor;
    if (!t.has_grad()) continue;
    for (Real g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + params[i].name + "'");
    }
    if (state.first_moment[i].size() != t.numel()) {
      throw DimensionError("moment buffer size mismatch for parameter '" + params[i].name + "'");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].tensor;
    if (!p.has_grad()) continue;
    auto w = p.data();
    const auto g = p.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const double decay = params[i].decay ? c.weight_decay : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = static_cast<Real>(c.beta1 * m[j] + (1.0 - c.beta1) * g[j]);
      v[j] = static_cast<Real>(c.beta2 * v[j] + (1.0 - c.beta2) * double(g[j]) * g[j]);
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      w[j] = static_cast<Real>(w[j] - c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + decay * w[j]));
    }
  }
}

double clip_grad_norm(ParamSet& params, double max_norm) {
  double sq = 0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (Real g : p.tensor.grad()) sq += double(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Real factor = static_cast<Real>(max_norm / (norm + 1e-12));
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (Real& g : p.tensor.node()->grad) g *= factor;
    }
  }
  return norm;
}

double CosineSchedule::at(std::size_t step) const {
  if (warmup_steps > 0 && step < warmup_steps) {
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::size_t decay_span = total_steps > warmup_steps + 1 ? total_steps - 1 - warmup_steps : 0;
  if (decay_span == 0) return step + 1 >= total_steps ? min_lr : base_lr;
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_span));
  return min_lr + (base_lr - min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace csmae
