#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csmae/tensor.hpp"

namespace csmae {

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool decay = true;  // subject to decoupled weight decay
};

// Ordered, named collection of trainable tensors.
class ParamSet {
 public:
  // Matrices decay by default; vectors (biases, norms, tokens) do not.
  Tensor& add(std::string name, Tensor tensor);
  Tensor& add(std::string name, Tensor tensor, bool decay);

  const Tensor* find(const std::string& name) const;
  Tensor* find(const std::string& name);

  void zero_grad();
  void append(const ParamSet& other);

  std::size_t size() const { return params_.size(); }
  std::size_t numel() const;
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  const NamedParam& operator[](std::size_t i) const { return params_[i]; }
  NamedParam& operator[](std::size_t i) { return params_[i]; }

 private:
  std::vector<NamedParam> params_;
};

struct AdamWConfig {
  double lr = 1.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct OptimizerState {
  AdamWConfig config;
  std::vector<std::vector<Real>> first_moment;
  std::vector<std::vector<Real>> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ParamSet& params, AdamWConfig config);
};

// One decoupled-weight-decay Adam update over every parameter that holds a gradient.
// Throws NumericError naming the parameter if a gradient is NaN or infinite.
void adamw_step(ParamSet& params, OptimizerState& state);

// Rescales all gradients so their global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(ParamSet& params, double max_norm);

// Linear warmup then cosine decay; at(total_steps - 1) == min_lr.
struct CosineSchedule {
  double base_lr = 1.5e-4;
  double min_lr = 1e-6;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  double at(std::size_t step) const;
};

}  // namespace csmae
