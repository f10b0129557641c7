#pragma once

#include <vector>

#include "csmae/data.hpp"
#include "csmae/training.hpp"

namespace test {

// Small enough that a training step takes well under a millisecond.
struct Tiny {
  csmae::SynthConfig synth;
  csmae::TokenizerConfig tokenizer;
  csmae::BackboneConfig backbone;
  csmae::SelectionConfig selection;
  csmae::PretrainConfig pretrain;

  Tiny() {
    synth.frames = 4;
    synth.height = synth.width = 16;
    tokenizer.dim = 16;
    backbone.encoder_dim = 16;
    backbone.encoder_heads = 2;
    backbone.encoder_depth = 1;
    backbone.decoder_dim = 8;
    backbone.decoder_heads = 2;
    backbone.decoder_depth = 1;
    backbone.patch_length = tokenizer.patch_length();
    selection.dim = 16;
    selection.heads = 2;
    pretrain.ratio = 0.75;
    pretrain.epochs = 2;
    pretrain.batch_size = 2;
    pretrain.lr = 1e-3;
    pretrain.warmup_steps = 2;
  }

  std::vector<csmae::PreparedClip> clips(std::size_t n, std::uint64_t seed = 1) const {
    std::vector<csmae::PreparedClip> out;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t phase = i % synth.num_phases;
      const auto clip = csmae::generate_clip(synth, {phase, csmae::phase_name(phase)}, csmae::clip_seed(seed, i));
      out.push_back(csmae::prepare_clip(clip, tokenizer, pretrain.normalize_targets));
      out.back().phase = phase;
    }
    return out;
  }
};

}  // namespace test
