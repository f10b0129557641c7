#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "csmae/optim.hpp"
#include "csmae/rng.hpp"
#include "csmae/tensor.hpp"

namespace csmae::nn {

// Layers hold handles aliasing tensors registered in a ParamSet.
struct Linear {
  Tensor weight;  // [in×out]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  Real eps = Real(1e-5);

  Tensor operator()(const Tensor& x) const;
};

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
struct TransformerBlock {
  LayerNorm attn_norm;
  Linear qkv;
  Linear proj;
  LayerNorm mlp_norm;
  Linear fc1;
  Linear fc2;
  std::size_t heads = 1;

  Tensor operator()(const Tensor& x) const;
};

// Self-attention sublayer alone (no residual): proj(MHA(qkv(x))).
Tensor self_attention(const Linear& qkv, const Linear& proj, std::size_t heads, const Tensor& x);

Linear make_linear(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng);
LayerNorm make_layer_norm(ParamSet& params, const std::string& prefix, std::size_t dim);
TransformerBlock make_block(ParamSet& params, const std::string& prefix, std::size_t dim, std::size_t heads,
                            std::size_t mlp_ratio, Rng& rng);

}  // namespace csmae::nn
