#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csmae/backbone.hpp"
#include "csmae/checkpoint.hpp"
#include "csmae/data.hpp"
#include "csmae/losses.hpp"
#include "csmae/masking.hpp"
#include "csmae/optim.hpp"

namespace csmae {

struct PretrainConfig {
  double ratio = 0.95;
  std::size_t epochs = 800;
  std::size_t batch_size = 8;
  double lr = 1.5e-4;
  double min_lr = 1e-6;
  std::size_t warmup_steps = 40;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double grad_clip = 0.0;  // max global norm; 0 disables
  LossKind loss = LossKind::mse;
  bool normalize_targets = true;
  MaskStrategy strategy = MaskStrategy::adaptive;
  double selection_weight = 1.0;  // lambda
  std::uint64_t seed = 0;

  void validate() const;
  AdamWConfig adamw() const;
};

// A clip pre-cut into tubelets, with its reconstruction targets.
struct PreparedClip {
  Tensor patches;  // raw [N × patch_length]
  PatchTargets targets;
  GridMeta grid;
  std::vector<std::uint8_t> region;  // per-token flags (e.g. foreground); may be empty
  std::size_t phase = 0;
  std::string source_id;
};

PreparedClip prepare_clip(const VideoClip& clip, const TokenizerConfig& cfg, bool normalize_targets,
                          float eps = 1e-6f);

// Every clip of a manifest, prepared for training; `path` is manifest.json or its directory.
struct Corpus {
  Manifest manifest;
  std::vector<PreparedClip> clips;
  std::vector<bool> labeled;
  std::size_t num_classes = 0;  // 1 + largest phase index
};

Corpus load_corpus(const std::filesystem::path& path, const TokenizerConfig& cfg, bool normalize_targets);

struct LossReport {
  std::size_t step = 0;
  double reconstruction = 0;  // L_R, batch mean
  double selection = 0;       // L_select, batch mean (0 for baseline strategies)
  double lr = 0;
  std::optional<double> region_prob_mass;  // mean P mass on region tokens
  std::vector<std::vector<double>> per_token_errors;  // L_iR per clip, masked order
};

// Forward pass of one clip through tokenizer, selection, encoder and decoder.
struct ClipForward {
  MaskSpec spec;
  ReconstructionLoss reconstruction;
  Tensor selection;  // undefined for baseline strategies
  ProbabilityMap probabilities;  // empty for baseline strategies
};

// `fixed_spec`, when given, replaces sampling (used to audit gradients with frozen masks).
ClipForward forward_clip(const PreparedClip& clip, const ModelParams& model, const SelectionParams* selection,
                         const PretrainConfig& cfg, Rng& rng, const MaskSpec* fixed_spec = nullptr);

// Model (phi), selection network (theta) and their optimizer states.
class Pretrainer {
 public:
  Pretrainer(const TokenizerConfig& tokenizer, const BackboneConfig& backbone, const SelectionConfig& selection,
             const PretrainConfig& pretrain);

  // One optimization step over a batch; per-clip randomness derives from (seed, step, slot).
  LossReport train_step(std::span<const PreparedClip* const> batch, double lr);

  std::size_t step() const { return step_; }
  ModelParams& model() { return model_; }
  const ModelParams& model() const { return model_; }
  SelectionParams& selection() { return selection_; }
  const SelectionParams& selection() const { return selection_; }
  ParamSet& selection_params() { return selection_params_; }
  const ParamSet& selection_params() const { return selection_params_; }
  OptimizerState& model_optimizer() { return model_opt_; }
  OptimizerState& selection_optimizer() { return selection_opt_; }
  const SelectionConfig& selection_config() const { return selection_cfg_; }
  const PretrainConfig& config() const { return cfg_; }
  bool adaptive() const { return cfg_.strategy == MaskStrategy::adaptive; }

  // JSON text of every setting that determines training dynamics.
  std::string config_snapshot() const;

  Checkpoint to_checkpoint() const;
  // Restores parameters, optimizer states and the step counter. Refuses (ConfigError
  // with a field diff) when the stored snapshot differs from this trainer's.
  void restore(const Checkpoint& checkpoint);

 private:
  PretrainConfig cfg_;
  SelectionConfig selection_cfg_;
  ModelParams model_;
  ParamSet selection_params_;
  SelectionParams selection_;
  OptimizerState model_opt_;
  OptimizerState selection_opt_;
  std::size_t step_ = 0;
};

struct RunOptions {
  std::filesystem::path out_dir;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::optional<std::filesystem::path> resume_from;
  std::size_t stop_after = 0;  // stop once this many steps are done (0: run to the end)
  std::function<void(const LossReport&)> on_step;
};

struct RunResult {
  std::size_t steps_done = 0;
  std::size_t total_steps = 0;
  LossReport last;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
};

std::size_t steps_per_epoch(std::size_t corpus_size, std::size_t batch_size);
CosineSchedule pretrain_schedule(const PretrainConfig& cfg, std::size_t corpus_size);

// Seeded epoch loop with cosine lr, periodic checkpoints (ckpt_NNNNNN.csma and
// last.csma) and a metrics.jsonl line per step.
RunResult pretrain_run(Pretrainer& trainer, std::span<const PreparedClip> corpus, const RunOptions& options);

// Parses a snapshot and returns "key: old -> new" lines for every difference.
std::vector<std::string> config_diff(const std::string& stored_json, const std::string& current_json);

}  // namespace csmae
