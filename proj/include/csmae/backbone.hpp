#pragma once

#include <cstddef>
#include <vector>

#include "csmae/masking.hpp"
#include "csmae/nn.hpp"
#include "csmae/tokenizer.hpp"

namespace csmae {

struct BackboneConfig {
  std::size_t encoder_depth = 4;
  std::size_t encoder_dim = 64;
  std::size_t encoder_heads = 4;
  std::size_t encoder_mlp_ratio = 4;
  std::size_t decoder_depth = 4;
  std::size_t decoder_dim = 32;
  std::size_t decoder_heads = 2;
  std::size_t decoder_mlp_ratio = 4;
  std::size_t patch_length = 96;

  void validate() const;
};

struct EncoderParams {
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm norm;
};

struct DecoderParams {
  nn::Linear embed;  // encoder dim -> decoder dim
  Tensor mask_token;  // [1 × decoder dim], shared by every masked slot
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm norm;
  nn::Linear head;  // decoder dim -> patch length
};

// Everything trained by the reconstruction loss (phi). Parameter names are prefixed
// "tok.", "enc." and "dec.".
struct ModelParams {
  TokenizerConfig tokenizer_config;
  BackboneConfig backbone_config;
  ParamSet params;
  TokenizerParams tokenizer;
  EncoderParams encoder;
  DecoderParams decoder;
};

ModelParams make_model(const TokenizerConfig& tokenizer, const BackboneConfig& backbone, Rng& rng);

struct LatentBatch {
  Tensor features;  // [M × encoder dim]
  MaskSpec spec;
};

struct PatchPredictions {
  Tensor values;  // [|masked| × patch length], rows in spec.masked order
  std::vector<std::size_t> ids;
};

// Transformer encoder over the given token rows (positional encoding already added).
Tensor encode_tokens(const Tensor& tokens, const ModelParams& model);

// Gathers the visible rows of `tokens` and encodes them.
LatentBatch encode(const Tensor& tokens, const MaskSpec& spec, const ModelParams& model);

PatchPredictions decode(const LatentBatch& latents, const ModelParams& model);

// Fixed decoder-side positional table: the encoder's sinusoidal table resampled to
// the decoder width by linear interpolation across columns.
Tensor decoder_positional_encoding(std::size_t tokens, std::size_t encoder_dim, std::size_t decoder_dim);

}  // namespace csmae
