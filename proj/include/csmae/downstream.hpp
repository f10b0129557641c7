#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "csmae/backbone.hpp"
#include "csmae/checkpoint.hpp"
#include "csmae/training.hpp"

namespace csmae {

struct FinetuneConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  double min_lr = 1e-5;
  std::size_t warmup_steps = 5;
  double weight_decay = 0.05;
  double grad_clip = 1.0;
  double encoder_lr_scale = 0.1;  // tokenizer+encoder lr relative to the head's; 0 freezes them
  std::size_t patience = 40;  // epochs without a val improvement before stopping
  double label_fraction = 0.0;  // 0: use the manifest's labeled flags
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassifierHead {
  nn::Linear linear;  // encoder dim -> num classes
  std::size_t num_classes = 0;
  // Frozen per-dimension standardization of the pooled features, (x - center) * inv_scale.
  // Undefined tensors mean identity. Composed with `linear` this is still one affine map.
  Tensor center;     // [1 × dim]
  Tensor inv_scale;  // [1 × dim]
};

ClassifierHead make_head(ParamSet& params, std::size_t in_dim, std::size_t num_classes, Rng& rng);

// All tokens visible: tokenize, encode, mean-pool over tokens. [1 × encoder dim]
Tensor pooled_features(const Tensor& patches, const ModelParams& model);

// Sets center/inv_scale from the mean and std of the given pooled feature rows.
void fit_standardization(ClassifierHead& head, std::span<const Tensor> pooled, double eps = 1e-6);

// pooled_features, standardization, linear head. [1 × classes] logits.
Tensor classify_clip(const Tensor& patches, const ModelParams& model, const ClassifierHead& head);

struct SplitSpec {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  double label_fraction = 1.0;

  void validate() const;  // lists must be pairwise disjoint
  std::string to_json() const;
  static SplitSpec from_json(const std::string& text);
};

struct MetricsReport {
  double accuracy = 0;
  double precision = 0;  // macro over classes present in the labels
  double recall = 0;
  double jaccard = 0;
  std::size_t num_classes = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [label][prediction]

  std::string to_json() const;
};

MetricsReport compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                              std::size_t num_classes);

enum class AccessPurpose { train, validate, test };

// Called with (clip index, purpose) whenever fine-tuning reads a clip.
using AccessHook = std::function<void(std::size_t, AccessPurpose)>;

struct FinetuneData {
  std::span<const PreparedClip> clips;
  std::vector<bool> labeled;  // per clip, from the manifest
  std::size_t num_classes = 0;
};

// Train ids actually used: labeled train clips, or the first ceil(f*|train|) train
// clips when cfg.label_fraction > 0.
std::vector<std::size_t> training_clip_ids(const SplitSpec& split, const FinetuneData& data,
                                           const FinetuneConfig& cfg);

struct FinetuneResult {
  MetricsReport test;
  double best_val_accuracy = 0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::size_t train_clips = 0;
  ParamSet params;  // fine-tuned tokenizer, encoder and head parameters
  Tensor center;    // head standardization
  Tensor inv_scale;
};

// Full fine-tune of tokenizer+encoder+head with cross-entropy on labeled train clips,
// early-stopped on validation accuracy. `pretrained` null means random init.
FinetuneResult finetune_run(const FinetuneData& data, const SplitSpec& split, const Checkpoint* pretrained,
                            const TokenizerConfig& tokenizer, const BackboneConfig& backbone,
                            const FinetuneConfig& cfg, const AccessHook& hook = {});

// Fine-tuned tokenizer+encoder+head as a checkpoint ("ft/<name>" entries plus an
// architecture snapshot), and the inverse.
Checkpoint classifier_checkpoint(const FinetuneResult& result, const TokenizerConfig& tokenizer,
                                 const BackboneConfig& backbone, std::size_t num_classes);

struct Classifier {
  ModelParams model;
  ClassifierHead head;
};

Classifier load_classifier(const Checkpoint& checkpoint);

// Predicted class per clip id (all tokens visible).
std::vector<std::size_t> predict(const FinetuneData& data, std::span<const std::size_t> ids, const ModelParams& model,
                                 const ClassifierHead& head, const AccessHook& hook, AccessPurpose purpose);

}  // namespace csmae
