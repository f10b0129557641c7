#include "csmae/backbone.hpp"

#include <map>
#include <string>
#include <tuple>

#include "csmae/errors.hpp"
#include "csmae/ops.hpp"

namespace csmae {

void BackboneConfig::validate() const {
  if (encoder_dim == 0 || encoder_heads == 0 || encoder_dim % encoder_heads != 0) {
    throw ConfigError("encoder dim " + std::to_string(encoder_dim) + " not divisible by " +
                      std::to_string(encoder_heads) + " heads");
  }
  if (decoder_dim == 0 || decoder_heads == 0 || decoder_dim % decoder_heads != 0) {
    throw ConfigError("decoder dim " + std::to_string(decoder_dim) + " not divisible by " +
                      std::to_string(decoder_heads) + " heads");
  }
  if (encoder_mlp_ratio == 0 || decoder_mlp_ratio == 0) throw ConfigError("mlp ratio must be positive");
  if (patch_length == 0) throw ConfigError("patch length must be positive");
}

ModelParams make_model(const TokenizerConfig& tokenizer, const BackboneConfig& backbone, Rng& rng) {
  tokenizer.validate();
  backbone.validate();
  if (tokenizer.dim != backbone.encoder_dim) {
    throw ConfigError("tokenizer dim " + std::to_string(tokenizer.dim) + " must equal encoder dim " +
                      std::to_string(backbone.encoder_dim));
  }
  if (tokenizer.patch_length() != backbone.patch_length) {
    throw ConfigError("backbone patch length " + std::to_string(backbone.patch_length) + " does not match tubelet " +
                      std::to_string(tokenizer.patch_length()));
  }
  ModelParams m;
  m.tokenizer_config = tokenizer;
  m.backbone_config = backbone;
  m.tokenizer = make_tokenizer_params(m.params, tokenizer, rng);
  for (std::size_t i = 0; i < backbone.encoder_depth; ++i) {
    m.encoder.blocks.push_back(nn::make_block(m.params, "enc.block" + std::to_string(i), backbone.encoder_dim,
                                              backbone.encoder_heads, backbone.encoder_mlp_ratio, rng));
  }
  m.encoder.norm = nn::make_layer_norm(m.params, "enc.norm", backbone.encoder_dim);
  m.decoder.embed = nn::make_linear(m.params, "dec.embed", backbone.encoder_dim, backbone.decoder_dim, rng);
  std::vector<Real> token(backbone.decoder_dim);
  for (Real& v : token) v = static_cast<Real>(0.02 * rng.normal());
  m.decoder.mask_token = m.params.add("dec.mask_token", Tensor({1, backbone.decoder_dim}, std::move(token)), false);
  for (std::size_t i = 0; i < backbone.decoder_depth; ++i) {
    m.decoder.blocks.push_back(nn::make_block(m.params, "dec.block" + std::to_string(i), backbone.decoder_dim,
                                              backbone.decoder_heads, backbone.decoder_mlp_ratio, rng));
  }
  m.decoder.norm = nn::make_layer_norm(m.params, "dec.norm", backbone.decoder_dim);
  m.decoder.head = nn::make_linear(m.params, "dec.head", backbone.decoder_dim, backbone.patch_length, rng);
  return m;
}

Tensor encode_tokens(const Tensor& tokens, const ModelParams& model) {
  if (tokens.ndim() != 2 || tokens.cols() != model.backbone_config.encoder_dim) {
    throw ConfigError("encoder expects tokens of dim " + std::to_string(model.backbone_config.encoder_dim) + ", got " +
                      shape_str(tokens.shape()));
  }
  Tensor x = tokens;
  for (const auto& block : model.encoder.blocks) x = block(x);
  return model.encoder.norm(x);
}

LatentBatch encode(const Tensor& tokens, const MaskSpec& spec, const ModelParams& model) {
  if (spec.visible.empty()) throw ContractError("encode needs at least one visible token");
  if (tokens.ndim() != 2 || tokens.rows() != spec.num_tokens) {
    throw ContractError("mask spec over " + std::to_string(spec.num_tokens) + " tokens applied to " +
                        shape_str(tokens.shape()));
  }
  LatentBatch out;
  out.spec = spec;
  out.features = encode_tokens(ops::gather_rows(tokens, spec.visible), model);
  return out;
}

Tensor decoder_positional_encoding(std::size_t tokens, std::size_t encoder_dim, std::size_t decoder_dim) {
  thread_local std::map<std::tuple<std::size_t, std::size_t, std::size_t>, Tensor> cache;
  const auto key = std::make_tuple(tokens, encoder_dim, decoder_dim);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const Tensor table = positional_encoding(tokens, encoder_dim);
  std::vector<Real> out(tokens * decoder_dim);
  const auto src = table.data();
  for (std::size_t j = 0; j < decoder_dim; ++j) {
    const double pos = decoder_dim > 1 ? static_cast<double>(j) * static_cast<double>(encoder_dim - 1) /
                                             static_cast<double>(decoder_dim - 1)
                                       : 0.0;
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, encoder_dim - 1);
    const Real frac = static_cast<Real>(pos - static_cast<double>(lo));
    for (std::size_t i = 0; i < tokens; ++i) {
      out[i * decoder_dim + j] = (Real(1) - frac) * src[i * encoder_dim + lo] + frac * src[i * encoder_dim + hi];
    }
  }
  Tensor result({tokens, decoder_dim}, std::move(out));
  cache.emplace(key, result);
  return result;
}

PatchPredictions decode(const LatentBatch& latents, const ModelParams& model) {
  const MaskSpec& spec = latents.spec;
  if (latents.features.ndim() != 2 || latents.features.rows() != spec.visible.size()) {
    throw ContractError("latent rows do not match the mask spec's visible count");
  }
  if (spec.masked.empty()) throw ContractError("decode needs at least one masked token");
  const BackboneConfig& cfg = model.backbone_config;
  const std::size_t n = spec.num_tokens, m = spec.visible.size();

  const Tensor visible = model.decoder.embed(latents.features);
  const std::vector<std::size_t> zeros(spec.masked.size(), 0);
  const Tensor pos = decoder_positional_encoding(n, cfg.encoder_dim, cfg.decoder_dim);
  const Tensor masked = ops::add(ops::gather_rows(model.decoder.mask_token, zeros), ops::gather_rows(pos, spec.masked));

  // Row order of concat is [visible..., masked...]; permute back to token order.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < m; ++i) order[spec.visible[i]] = i;
  for (std::size_t i = 0; i < spec.masked.size(); ++i) order[spec.masked[i]] = m + i;
  Tensor x = ops::gather_rows(ops::concat_rows({visible, masked}), order);
  for (const auto& block : model.decoder.blocks) x = block(x);
  x = model.decoder.norm(x);

  PatchPredictions out;
  out.ids = spec.masked;
  out.values = model.decoder.head(ops::gather_rows(x, spec.masked));
  return out;
}

}  // namespace csmae
