#include "csmae/nn.hpp"

#include <cmath>

#include "csmae/errors.hpp"
#include "csmae/ops.hpp"

namespace csmae::nn {

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

Tensor LayerNorm::operator()(const Tensor& x) const { return ops::layer_norm(x, gain, bias, eps); }

Tensor self_attention(const Linear& qkv, const Linear& proj, std::size_t heads, const Tensor& x) {
  return proj(ops::attention(qkv(x), heads));
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  Tensor h = ops::add(x, self_attention(qkv, proj, heads, attn_norm(x)));
  return ops::add(h, fc2(ops::gelu(fc1(mlp_norm(h)))));
}

Linear make_linear(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng) {
  // Xavier-uniform weights, zero bias.
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<Real> w(in * out);
  for (Real& v : w) v = static_cast<Real>(rng.uniform(-bound, bound));
  Linear layer;
  layer.weight = params.add(prefix + ".weight", Tensor({in, out}, std::move(w)), true);
  layer.bias = params.add(prefix + ".bias", Tensor::zeros({out}), false);
  return layer;
}

LayerNorm make_layer_norm(ParamSet& params, const std::string& prefix, std::size_t dim) {
  LayerNorm layer;
  layer.gain = params.add(prefix + ".gain", Tensor::full({dim}, Real(1)), false);
  layer.bias = params.add(prefix + ".bias", Tensor::zeros({dim}), false);
  return layer;
}

TransformerBlock make_block(ParamSet& params, const std::string& prefix, std::size_t dim, std::size_t heads,
                            std::size_t mlp_ratio, Rng& rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(prefix + ": dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                      " heads");
  }
  TransformerBlock block;
  block.heads = heads;
  block.attn_norm = make_layer_norm(params, prefix + ".attn_norm", dim);
  block.qkv = make_linear(params, prefix + ".qkv", dim, 3 * dim, rng);
  block.proj = make_linear(params, prefix + ".proj", dim, dim, rng);
  block.mlp_norm = make_layer_norm(params, prefix + ".mlp_norm", dim);
  block.fc1 = make_linear(params, prefix + ".fc1", dim, mlp_ratio * dim, rng);
  block.fc2 = make_linear(params, prefix + ".fc2", mlp_ratio * dim, dim, rng);
  return block;
}

}  // namespace csmae::nn
