#include "csmae/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "csmae/config.hpp"
#include "csmae/errors.hpp"
#include "csmae/ops.hpp"

namespace csmae {

namespace fs = std::filesystem;

void PretrainConfig::validate() const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("pretrain.ratio must be in (0, 1), got " + std::to_string(ratio));
  if (epochs == 0) throw ConfigError("pretrain.epochs must be positive");
  if (batch_size == 0) throw ConfigError("pretrain.batch_size must be positive");
  if (!(lr > 0)) throw ConfigError("pretrain.lr must be positive");
  if (min_lr < 0 || min_lr > lr) throw ConfigError("pretrain.min_lr must be in [0, lr]");
  if (!(selection_weight >= 0)) throw ConfigError("pretrain.selection_weight must be non-negative");
  if (grad_clip < 0) throw ConfigError("pretrain.grad_clip must be non-negative");
}

AdamWConfig PretrainConfig::adamw() const {
  AdamWConfig c;
  c.lr = lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  c.weight_decay = weight_decay;
  return c;
}

PreparedClip prepare_clip(const VideoClip& clip, const TokenizerConfig& cfg, bool normalize_targets, float eps) {
  PreparedClip out;
  out.grid = grid_for(clip, cfg);
  out.patches = unfold_patches(clip, cfg);
  out.targets = patch_normalize_targets(clip, cfg, normalize_targets, eps);
  if (!clip.foreground.empty()) out.region = foreground_tokens(clip, cfg);
  out.source_id = clip.source_id;
  return out;
}

Corpus load_corpus(const fs::path& path, const TokenizerConfig& cfg, bool normalize_targets) {
  Corpus corpus;
  corpus.manifest = read_manifest(fs::is_directory(path) ? path / "manifest.json" : path);
  const Manifest& m = corpus.manifest;
  if (m.entries.empty()) throw DataError("manifest lists no clips");
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    VideoClip clip = load_raw_clip(m.clip_path(i));
    if (fs::exists(m.mask_path(i))) load_foreground_mask(m.mask_path(i), clip);
    corpus.clips.push_back(prepare_clip(clip, cfg, normalize_targets));
    corpus.clips.back().phase = m.entries[i].phase_index;
    corpus.labeled.push_back(m.entries[i].labeled);
    corpus.num_classes = std::max(corpus.num_classes, m.entries[i].phase_index + 1);
  }
  return corpus;
}

ClipForward forward_clip(const PreparedClip& clip, const ModelParams& model, const SelectionParams* selection,
                         const PretrainConfig& cfg, Rng& rng, const MaskSpec* fixed_spec) {
  const Tensor tokens = embed_patches(clip.patches, model.tokenizer_config, model.tokenizer);
  ClipForward out;
  if (cfg.strategy == MaskStrategy::adaptive) {
    if (selection == nullptr) throw ContractError("adaptive masking needs selection parameters");
    // The selection network sees token values only; L_select must not reach the tokenizer.
    out.probabilities = select_probabilities(ops::detach(tokens), *selection);
    out.spec = fixed_spec ? *fixed_spec : sample_visible(out.probabilities.probs, cfg.ratio, rng);
  } else {
    out.spec = fixed_spec ? *fixed_spec : baseline_mask(cfg.strategy, clip.grid, cfg.ratio, rng);
  }
  const LatentBatch latents = encode(tokens, out.spec, model);
  const PatchPredictions predictions = decode(latents, model);
  const Tensor targets = ops::gather_rows(clip.targets.values, out.spec.masked);
  out.reconstruction = reconstruction_loss(predictions.values, targets, cfg.loss);
  if (cfg.strategy == MaskStrategy::adaptive) {
    out.selection =
        selection_loss(out.probabilities.log_probs, ops::detach(out.reconstruction.per_token), out.spec);
  }
  return out;
}

Pretrainer::Pretrainer(const TokenizerConfig& tokenizer, const BackboneConfig& backbone,
                       const SelectionConfig& selection, const PretrainConfig& pretrain)
    : cfg_(pretrain), selection_cfg_(selection) {
  cfg_.validate();
  if (selection.dim != tokenizer.dim) {
    throw ConfigError("selection dim " + std::to_string(selection.dim) + " must equal token dim " +
                      std::to_string(tokenizer.dim));
  }
  Rng rng = Rng::derive(cfg_.seed, {0x1217u});
  model_ = make_model(tokenizer, backbone, rng);
  selection_ = make_selection_params(selection_params_, selection, rng);
  model_opt_ = OptimizerState::for_params(model_.params, cfg_.adamw());
  selection_opt_ = OptimizerState::for_params(selection_params_, cfg_.adamw());
}

LossReport Pretrainer::train_step(std::span<const PreparedClip* const> batch, double lr) {
  if (batch.empty()) throw ContractError("train_step needs a non-empty batch");
  model_.params.zero_grad();
  selection_params_.zero_grad();

  LossReport report;
  report.step = step_;
  report.lr = lr;
  const bool adaptive_run = adaptive();
  const Real inv_batch = Real(1) / static_cast<Real>(batch.size());
  double region_mass = 0;
  std::size_t region_clips = 0;

  Tape tape;
  Tensor total;
  {
    Tape::Scope scope(tape);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Rng rng = Rng::derive(cfg_.seed, {0x57E9u, step_, b});
      const ClipForward f = forward_clip(*batch[b], model_, adaptive_run ? &selection_ : nullptr, cfg_, rng);
      Tensor clip_loss = f.reconstruction.total;
      report.reconstruction += f.reconstruction.total.item();
      if (adaptive_run) {
        clip_loss = ops::add(clip_loss, ops::scale(f.selection, static_cast<Real>(cfg_.selection_weight)));
        report.selection += f.selection.item();
        if (!batch[b]->region.empty()) {
          double mass = 0;
          for (std::size_t i = 0; i < batch[b]->region.size(); ++i) {
            if (batch[b]->region[i]) mass += f.probabilities.probs[i];
          }
          region_mass += mass;
          ++region_clips;
        }
      }
      const auto errs = f.reconstruction.per_token.data();
      report.per_token_errors.emplace_back(errs.begin(), errs.end());
      total = b == 0 ? clip_loss : ops::add(total, clip_loss);
    }
    total = ops::scale(total, inv_batch);
  }
  report.reconstruction /= static_cast<double>(batch.size());
  report.selection /= static_cast<double>(batch.size());
  if (region_clips > 0) report.region_prob_mass = region_mass / static_cast<double>(region_clips);
  if (!std::isfinite(total.item())) {
    throw NumericError("non-finite loss at step " + std::to_string(step_));
  }

  tape.backward(total);
  if (cfg_.grad_clip > 0) {
    clip_grad_norm(model_.params, cfg_.grad_clip);
    if (adaptive_run) clip_grad_norm(selection_params_, cfg_.grad_clip);
  }
  model_opt_.config.lr = lr;
  adamw_step(model_.params, model_opt_);
  if (adaptive_run) {
    selection_opt_.config.lr = lr;
    adamw_step(selection_params_, selection_opt_);
  }
  ++step_;
  return report;
}

std::string Pretrainer::config_snapshot() const {
  nlohmann::ordered_json j = {{"tokenizer", to_json(model_.tokenizer_config)},
                              {"backbone", to_json(model_.backbone_config)},
                              {"selection", to_json(selection_cfg_)},
                              {"pretrain", to_json(cfg_)}};
  return j.dump();
}

Checkpoint Pretrainer::to_checkpoint() const {
  Checkpoint ck;
  ck.put_text("meta/config", config_snapshot());
  ck.put("meta/step", {1}, {static_cast<Real>(step_)});
  ck.put_params("phi/", model_.params);
  ck.put_params("theta/", selection_params_);
  ck.put_optimizer("opt/phi/", model_.params, model_opt_);
  ck.put_optimizer("opt/theta/", selection_params_, selection_opt_);
  return ck;
}

void Pretrainer::restore(const Checkpoint& checkpoint) {
  const std::string stored = checkpoint.get_text("meta/config");
  const std::string current = config_snapshot();
  if (stored != current) {
    std::string message = "checkpoint was written with a different configuration:";
    for (const auto& line : config_diff(stored, current)) message += "\n  " + line;
    throw ConfigError(message);
  }
  checkpoint.load_params("phi/", model_.params);
  checkpoint.load_params("theta/", selection_params_);
  checkpoint.load_optimizer("opt/phi/", model_.params, model_opt_);
  checkpoint.load_optimizer("opt/theta/", selection_params_, selection_opt_);
  model_opt_.config = cfg_.adamw();
  selection_opt_.config = cfg_.adamw();
  step_ = static_cast<std::size_t>(checkpoint.get("meta/step").item());
}

std::size_t steps_per_epoch(std::size_t corpus_size, std::size_t batch_size) {
  if (corpus_size == 0 || batch_size == 0) throw ConfigError("empty corpus or zero batch size");
  return (corpus_size + batch_size - 1) / batch_size;
}

CosineSchedule pretrain_schedule(const PretrainConfig& cfg, std::size_t corpus_size) {
  CosineSchedule s;
  s.base_lr = cfg.lr;
  s.min_lr = cfg.min_lr;
  s.total_steps = cfg.epochs * steps_per_epoch(corpus_size, cfg.batch_size);
  s.warmup_steps = std::min(cfg.warmup_steps, s.total_steps > 0 ? s.total_steps - 1 : 0);
  return s;
}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::derive(seed, {0xE90Cu, epoch});
  rng.shuffle(order);
  return order;
}

void keep_log_prefix(const fs::path& log, std::size_t steps) {
  std::vector<std::string> kept;
  {
    std::ifstream in(log);
    std::string line;
    while (kept.size() < steps && std::getline(in, line)) kept.push_back(line);
  }
  std::ofstream out(log, std::ios::trunc | std::ios::binary);
  for (const auto& line : kept) out << line << '\n';
}

std::string log_line(const LossReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["L_R"] = r.reconstruction;
  j["L_select"] = r.selection;
  j["lr"] = r.lr;
  j["fg_prob_mass"] = r.region_prob_mass ? nlohmann::ordered_json(*r.region_prob_mass) : nlohmann::ordered_json();
  return j.dump();
}

std::string checkpoint_name(std::size_t step) {
  std::ostringstream s;
  s << "ckpt_" << std::setw(6) << std::setfill('0') << step << ".csma";
  return s.str();
}

}  // namespace

RunResult pretrain_run(Pretrainer& trainer, std::span<const PreparedClip> corpus, const RunOptions& options) {
  if (corpus.empty()) throw ConfigError("pretraining corpus is empty");
  const PretrainConfig& cfg = trainer.config();
  const std::size_t spe = steps_per_epoch(corpus.size(), cfg.batch_size);
  const CosineSchedule schedule = pretrain_schedule(cfg, corpus.size());

  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec || !fs::is_directory(options.out_dir)) throw IoError("cannot create " + options.out_dir.string());

  RunResult result;
  result.total_steps = schedule.total_steps;
  result.log = options.out_dir / "metrics.jsonl";
  result.checkpoint = options.out_dir / "last.csma";

  if (options.resume_from) {
    trainer.restore(Checkpoint::load(*options.resume_from));
    keep_log_prefix(result.log, trainer.step());
  } else {
    std::ofstream truncate(result.log, std::ios::trunc);
    if (!truncate) throw IoError("cannot write " + result.log.string());
  }
  std::ofstream log(result.log, std::ios::app | std::ios::binary);
  if (!log) throw IoError("cannot write " + result.log.string());

  std::string last_good = options.resume_from ? options.resume_from->string() : std::string("none");
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order;
  std::vector<const PreparedClip*> batch;

  while (trainer.step() < schedule.total_steps) {
    if (options.stop_after > 0 && trainer.step() >= options.stop_after) break;
    const std::size_t s = trainer.step();
    const std::size_t epoch = s / spe, pos = s % spe;
    if (epoch != cached_epoch) {
      order = epoch_order(cfg.seed, epoch, corpus.size());
      cached_epoch = epoch;
    }
    batch.clear();
    for (std::size_t i = pos * cfg.batch_size; i < std::min((pos + 1) * cfg.batch_size, corpus.size()); ++i) {
      batch.push_back(&corpus[order[i]]);
    }
    try {
      result.last = trainer.train_step(batch, schedule.at(s));
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + "; last good checkpoint: " + last_good);
    }
    log << log_line(result.last) << '\n';
    log.flush();
    if (options.on_step) options.on_step(result.last);
    if (options.checkpoint_every > 0 && trainer.step() % options.checkpoint_every == 0) {
      const Checkpoint ck = trainer.to_checkpoint();
      const fs::path path = options.out_dir / checkpoint_name(trainer.step());
      ck.save(path);
      ck.save(result.checkpoint);
      last_good = path.string();
    }
  }
  if (!log) throw IoError("failed writing " + result.log.string());
  trainer.to_checkpoint().save(result.checkpoint);
  result.steps_done = trainer.step();
  return result;
}

std::vector<std::string> config_diff(const std::string& stored_json, const std::string& current_json) {
  const auto flatten = [](const std::string& text) {
    std::map<std::string, std::string> out;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
      out["<document>"] = text;
      return out;
    }
    const nlohmann::json flat = j.flatten();
    for (const auto& [pointer, value] : flat.items()) out[pointer] = value.dump();
    return out;
  };
  const auto a = flatten(stored_json), b = flatten(current_json);
  std::vector<std::string> lines;
  for (const auto& [key, value] : a) {
    auto it = b.find(key);
    if (it == b.end()) {
      lines.push_back(key + ": " + value + " -> (absent)");
    } else if (it->second != value) {
      lines.push_back(key + ": " + value + " -> " + it->second);
    }
  }
  for (const auto& [key, value] : b) {
    if (!a.count(key)) lines.push_back(key + ": (absent) -> " + value);
  }
  return lines;
}

}  // namespace csmae
