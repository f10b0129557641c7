#include "csmae/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csmae/config.hpp"
#include "csmae/downstream.hpp"
#include "csmae/errors.hpp"
#include "csmae/image.hpp"
#include "csmae/ops.hpp"
#include "csmae/training.hpp"
#include "json.hpp"

namespace csmae {

namespace {

namespace fs = std::filesystem;

constexpr int kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kCorrupt = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--seed", c.seed, "Seed (overrides the config)");
}

RunConfig base_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void finish(RunConfig& cfg) {
  cfg.resolve();
  cfg.validate();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void log_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");
}

fs::path corpus_path(const std::string& flag, const RunConfig& cfg) {
  const std::string p = flag.empty() ? cfg.paths.corpus : flag;
  if (p.empty()) throw ConfigError("no corpus given (--corpus or paths.corpus)");
  return p;
}

fs::path corpus_dir(const fs::path& corpus) { return fs::is_directory(corpus) ? corpus : corpus.parent_path(); }

std::optional<SplitSpec> find_split(const std::string& flag, const RunConfig& cfg, const fs::path& corpus) {
  std::string p = flag.empty() ? cfg.paths.split : flag;
  if (p.empty()) {
    const fs::path fallback = corpus_dir(corpus) / "split.json";
    if (!fs::exists(fallback)) return std::nullopt;
    p = fallback.string();
  }
  return SplitSpec::from_json(read_text(p));
}

SplitSpec require_split(const std::string& flag, const RunConfig& cfg, const fs::path& corpus) {
  auto split = find_split(flag, cfg, corpus);
  if (!split) throw ConfigError("no split given (--split, paths.split or split.json next to the manifest)");
  return *split;
}

std::vector<PreparedClip> pretrain_clips(const Corpus& corpus, const std::optional<SplitSpec>& split) {
  if (!split) return corpus.clips;
  std::vector<PreparedClip> out;
  for (std::size_t id : split->train) {
    if (id >= corpus.clips.size()) throw IndexError("split references clip " + std::to_string(id));
    out.push_back(corpus.clips[id]);
  }
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---- gen-data

struct GenOptions {
  Common common;
  std::string out;
  std::size_t clips = 120;
  double label_fraction = 0.1;
  std::size_t val_clips = 0;
  std::size_t test_clips = 0;
};

int cmd_gen_data(const GenOptions& o, std::ostream& out) {
  RunConfig cfg = base_config(o.common);
  cfg.paths.corpus = o.out;
  finish(cfg);
  if (!(o.label_fraction >= 0 && o.label_fraction <= 1)) throw ConfigError("--label-fraction must be in [0, 1]");
  if (o.clips == 0) throw ConfigError("--clips must be positive");
  if (o.val_clips + o.test_clips >= o.clips) throw ConfigError("--val-clips + --test-clips must leave training clips");

  const Manifest m = generate_corpus(cfg.synth, o.clips, o.label_fraction, cfg.seed, o.out);
  SplitSpec split;
  const std::size_t n_train = o.clips - o.val_clips - o.test_clips;
  for (std::size_t i = 0; i < o.clips; ++i) {
    (i < n_train ? split.train : i < n_train + o.val_clips ? split.val : split.test).push_back(i);
  }
  split.label_fraction = o.label_fraction;
  write_text(fs::path(o.out) / "split.json", split.to_json() + "\n");
  log_config(cfg, o.out);
  out << "wrote " << m.entries.size() << " clips (" << m.labeled_count() << " labeled) to " << o.out << "\n";
  return kOk;
}

// ---- pretrain

struct PretrainOptions {
  Common common;
  std::string corpus, split, out, strategy, resume;
  std::optional<double> ratio;
  std::optional<std::size_t> epochs, batch_size;
  std::size_t checkpoint_every = 0, stop_after = 0, log_every = 50;
};

void apply_pretrain_overrides(const PretrainOptions& o, RunConfig& cfg) {
  if (!o.strategy.empty()) cfg.pretrain.strategy = parse_strategy(o.strategy);
  if (o.ratio) cfg.pretrain.ratio = *o.ratio;
  if (o.epochs) cfg.pretrain.epochs = *o.epochs;
  if (o.batch_size) cfg.pretrain.batch_size = *o.batch_size;
  if (!o.out.empty()) cfg.paths.out = o.out;
}

int cmd_pretrain(const PretrainOptions& o, std::ostream& out) {
  RunConfig cfg = base_config(o.common);
  apply_pretrain_overrides(o, cfg);
  const fs::path corpus_file = corpus_path(o.corpus, cfg);
  cfg.paths.corpus = corpus_file.string();
  finish(cfg);
  if (cfg.paths.out.empty()) throw ConfigError("no output directory (--out or paths.out)");

  const Corpus corpus = load_corpus(corpus_file, cfg.tokenizer, cfg.pretrain.normalize_targets);
  const std::vector<PreparedClip> clips = pretrain_clips(corpus, find_split(o.split, cfg, corpus_file));
  log_config(cfg, cfg.paths.out);

  Pretrainer trainer(cfg.tokenizer, cfg.backbone, cfg.selection, cfg.pretrain);
  RunOptions run;
  run.out_dir = cfg.paths.out;
  run.checkpoint_every = o.checkpoint_every;
  run.stop_after = o.stop_after;
  if (!o.resume.empty()) run.resume_from = fs::path(o.resume);
  const std::size_t log_every = o.log_every;
  run.on_step = [&out, log_every](const LossReport& r) {
    if (log_every > 0 && r.step % log_every == 0) {
      out << "step " << r.step << " L_R " << fixed(r.reconstruction) << " L_select " << fixed(r.selection)
          << " lr " << r.lr << "\n";
    }
  };
  const RunResult result = pretrain_run(trainer, clips, run);
  out << "steps " << result.steps_done << "/" << result.total_steps << "\n";
  out << "final L_R " << fixed(result.last.reconstruction, 6) << "\n";
  out << "checkpoint " << result.checkpoint.string() << "\n";
  return kOk;
}

// ---- finetune / eval

struct FinetuneOptions {
  Common common;
  std::string checkpoint, corpus, split, out;
  bool scratch = false;
  std::optional<double> label_fraction;
  std::optional<std::size_t> epochs;
};

int cmd_finetune(const FinetuneOptions& o, std::ostream& out) {
  RunConfig cfg = base_config(o.common);
  if (o.label_fraction) cfg.finetune.label_fraction = *o.label_fraction;
  if (o.epochs) cfg.finetune.epochs = *o.epochs;
  if (!o.out.empty()) cfg.paths.out = o.out;
  const fs::path corpus_file = corpus_path(o.corpus, cfg);
  cfg.paths.corpus = corpus_file.string();
  cfg.paths.checkpoint = o.checkpoint;
  finish(cfg);
  if (o.scratch == !o.checkpoint.empty()) throw ConfigError("give exactly one of --checkpoint or --scratch");
  if (cfg.paths.out.empty()) throw ConfigError("no output directory (--out or paths.out)");

  std::optional<Checkpoint> pretrained;
  if (!o.checkpoint.empty()) pretrained = Checkpoint::load(o.checkpoint);
  const Corpus corpus = load_corpus(corpus_file, cfg.tokenizer, false);
  const SplitSpec split = require_split(o.split, cfg, corpus_file);
  log_config(cfg, cfg.paths.out);

  const FinetuneData data{corpus.clips, corpus.labeled, corpus.num_classes};
  const FinetuneResult r = finetune_run(data, split, pretrained ? &*pretrained : nullptr, cfg.tokenizer,
                                        cfg.backbone, cfg.finetune);
  const fs::path dir = cfg.paths.out;
  write_text(dir / "metrics.json", r.test.to_json() + "\n");
  classifier_checkpoint(r, cfg.tokenizer, cfg.backbone, corpus.num_classes).save(dir / "finetuned.csma");
  out << r.test.to_json() << "\n";
  out << "train clips " << r.train_clips << ", epochs " << r.epochs_run << ", best val accuracy "
      << fixed(r.best_val_accuracy) << " at epoch " << r.best_epoch << "\n";
  return kOk;
}

struct EvalOptions {
  Common common;
  std::string checkpoint, corpus, split, out;
};

int cmd_eval(const EvalOptions& o, std::ostream& out) {
  RunConfig cfg = base_config(o.common);
  const fs::path corpus_file = corpus_path(o.corpus, cfg);
  finish(cfg);
  const Classifier classifier = load_classifier(Checkpoint::load(o.checkpoint));
  const Corpus corpus = load_corpus(corpus_file, classifier.model.tokenizer_config, false);
  const SplitSpec split = require_split(o.split, cfg, corpus_file);
  if (split.test.empty()) throw ConfigError("split has no test clips");
  if (corpus.num_classes > classifier.head.num_classes) {
    throw DataError("corpus has " + std::to_string(corpus.num_classes) + " phases, classifier " +
                    std::to_string(classifier.head.num_classes));
  }
  const FinetuneData data{corpus.clips, corpus.labeled, classifier.head.num_classes};
  const auto pred = predict(data, split.test, classifier.model, classifier.head, {}, AccessPurpose::test);
  std::vector<std::size_t> labels;
  for (std::size_t id : split.test) labels.push_back(corpus.clips[id].phase);
  const MetricsReport report = compute_metrics(pred, labels, classifier.head.num_classes);
  if (!o.out.empty()) write_text(o.out, report.to_json() + "\n");
  out << report.to_json() << "\n";
  return kOk;
}

// ---- reconstruct

struct ReconstructOptions {
  Common common;
  std::string checkpoint, clip, strategy, out_dir;
  std::optional<double> ratio;
};

int cmd_reconstruct(const ReconstructOptions& o, std::ostream& out) {
  const Checkpoint ck = Checkpoint::load(o.checkpoint);
  nlohmann::json snap;
  try {
    snap = nlohmann::json::parse(ck.get_text("meta/config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config snapshot is not JSON: ") + e.what());
  }
  if (!snap.contains("pretrain")) throw ConfigError("checkpoint is not a pretraining checkpoint");
  TokenizerConfig tok;
  BackboneConfig backbone;
  SelectionConfig selection;
  PretrainConfig pretrain;
  from_json(snap.at("tokenizer"), tok);
  from_json(snap.at("backbone"), backbone);
  from_json(snap.at("selection"), selection);
  from_json(snap.at("pretrain"), pretrain);
  Pretrainer trainer(tok, backbone, selection, pretrain);
  trainer.restore(ck);

  PretrainConfig view = pretrain;
  if (o.ratio) view.ratio = *o.ratio;
  if (!o.strategy.empty()) view.strategy = parse_strategy(o.strategy);
  view.validate();

  VideoClip clip = load_raw_clip(o.clip);
  const PreparedClip prepared = prepare_clip(clip, tok, view.normalize_targets);
  const ModelParams& model = trainer.model();
  Rng rng = Rng::derive(o.common.seed.value_or(0), {0x8EC0u});
  const Tensor tokens = embed_patches(prepared.patches, tok, model.tokenizer);
  const MaskSpec spec = view.strategy == MaskStrategy::adaptive
                            ? sample_visible(select_probabilities(tokens, trainer.selection()).probs, view.ratio, rng)
                            : baseline_mask(view.strategy, prepared.grid, view.ratio, rng);
  const PatchPredictions pred = decode(encode(tokens, spec, model), model);

  ClipOverlay masked = ClipOverlay::empty(prepared.grid, clip.channels);
  const Tensor visible_raw = ops::gather_rows(prepared.patches, spec.visible);
  detokenize_patches(visible_raw.data(), spec.visible, tok, nullptr, masked);
  ClipOverlay recon = masked;
  detokenize_patches(pred.values.data(), spec.masked, tok,
                     prepared.targets.normalized ? &prepared.targets.stats : nullptr, recon);

  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (!fs::is_directory(o.out_dir)) throw IoError("cannot create " + o.out_dir);
  for (std::size_t t = 0; t < clip.frames; ++t) {
    std::ostringstream suffix;
    suffix << "_t" << std::setw(2) << std::setfill('0') << t << ".ppm";
    const fs::path dir = o.out_dir;
    write_ppm(dir / ("original" + suffix.str()), clip.width, clip.height, frame_rgb(clip, t));
    write_ppm(dir / ("masked" + suffix.str()), clip.width, clip.height, frame_rgb(masked.clip, t));
    write_ppm(dir / ("recon" + suffix.str()), clip.width, clip.height, frame_rgb(recon.clip, t));
  }

  double abs_err = 0;
  std::size_t count = 0;
  const GridMeta& g = prepared.grid;
  for (std::size_t id : spec.masked) {
    const CellCoord cell = g.cell(id);
    for (std::size_t c = 0; c < clip.channels; ++c)
      for (std::size_t dt = 0; dt < g.tubelet_t; ++dt)
        for (std::size_t dh = 0; dh < g.tubelet_h; ++dh)
          for (std::size_t dw = 0; dw < g.tubelet_w; ++dw) {
            const std::size_t t = cell.t * g.tubelet_t + dt, y = cell.h * g.tubelet_h + dh,
                              x = cell.w * g.tubelet_w + dw;
            abs_err += std::abs(static_cast<double>(recon.clip.at(t, c, y, x)) - clip.at(t, c, y, x));
            ++count;
          }
  }
  out << "visible " << spec.visible.size() << "/" << spec.num_tokens << " tokens\n";
  out << "masked MAE " << fixed(count ? abs_err / static_cast<double>(count) : 0.0, 6) << "\n";
  out << "wrote " << 3 * clip.frames << " images to " << o.out_dir << "\n";
  return kOk;
}

// ---- ablate

struct AblateOptions {
  Common common;
  std::string corpus, split, axis, out;
  std::vector<std::string> values;
  std::optional<double> label_fraction;
};

void apply_axis(RunConfig& cfg, const std::string& axis, const std::string& value) {
  try {
    if (axis == "ratio") {
      std::size_t used = 0;
      cfg.pretrain.ratio = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } else if (axis == "decoder-depth") {
      std::size_t used = 0;
      cfg.backbone.decoder_depth = std::stoul(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } else if (axis == "strategy") {
      cfg.pretrain.strategy = parse_strategy(value);
    } else if (axis == "loss") {
      cfg.pretrain.loss = parse_loss_kind(value);
    }
  } catch (const std::logic_error&) {
    throw ConfigError("bad value '" + value + "' for axis " + axis);
  }
}

int cmd_ablate(const AblateOptions& o, std::ostream& out) {
  if (o.axis != "ratio" && o.axis != "decoder-depth" && o.axis != "strategy" && o.axis != "loss") {
    throw ConfigError("unknown axis '" + o.axis + "' (expected ratio, decoder-depth, strategy or loss)");
  }
  if (o.values.empty()) throw ConfigError("--values is empty");
  RunConfig cfg = base_config(o.common);
  if (o.label_fraction) cfg.finetune.label_fraction = *o.label_fraction;
  if (!o.out.empty()) cfg.paths.out = o.out;
  const fs::path corpus_file = corpus_path(o.corpus, cfg);
  cfg.paths.corpus = corpus_file.string();
  finish(cfg);
  if (cfg.paths.out.empty()) throw ConfigError("no output directory (--out or paths.out)");

  std::vector<RunConfig> rows;
  for (const auto& v : o.values) {
    RunConfig row = cfg;
    apply_axis(row, o.axis, v);
    finish(row);
    rows.push_back(row);
  }
  const Corpus corpus = load_corpus(corpus_file, cfg.tokenizer, cfg.pretrain.normalize_targets);
  const SplitSpec split = require_split(o.split, cfg, corpus_file);
  const std::vector<PreparedClip> clips = pretrain_clips(corpus, split);
  const FinetuneData data{corpus.clips, corpus.labeled, corpus.num_classes};
  const fs::path base = cfg.paths.out;
  log_config(cfg, base);

  std::ostringstream md, csv;
  md << "| " << o.axis << " | config hash | final L_R | accuracy | precision | recall | jaccard |\n";
  md << "|---|---|---|---|---|---|---|\n";
  csv << o.axis << ",config_hash,final_L_R,accuracy,precision,recall,jaccard\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RunConfig& row = rows[i];
    const fs::path dir = base / ("row_" + std::to_string(i));
    row.paths.out = dir.string();
    const std::string hash = config_hash(to_json(row).dump());
    log_config(row, dir);

    Pretrainer trainer(row.tokenizer, row.backbone, row.selection, row.pretrain);
    RunOptions run;
    run.out_dir = dir / "pretrain";
    const RunResult pre = pretrain_run(trainer, clips, run);
    const Checkpoint ck = Checkpoint::load(pre.checkpoint);
    const FinetuneResult ft = finetune_run(data, split, &ck, row.tokenizer, row.backbone, row.finetune);
    write_text(dir / "metrics.json", ft.test.to_json() + "\n");

    const MetricsReport& m = ft.test;
    md << "| " << o.values[i] << " | " << hash << " | " << fixed(pre.last.reconstruction) << " | "
       << fixed(m.accuracy) << " | " << fixed(m.precision) << " | " << fixed(m.recall) << " | " << fixed(m.jaccard)
       << " |\n";
    csv << o.values[i] << ',' << hash << ',' << fixed(pre.last.reconstruction, 6) << ',' << fixed(m.accuracy, 6)
        << ',' << fixed(m.precision, 6) << ',' << fixed(m.recall, 6) << ',' << fixed(m.jaccard, 6) << '\n';
  }
  write_text(base / "ablation.md", md.str());
  write_text(base / "ablation.csv", csv.str());
  out << md.str();
  return kOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive token selection masked-autoencoder pretraining for video", "csmae"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic phase-labeled corpus");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--clips", gen.clips, "Number of clips")->capture_default_str();
  gen_cmd->add_option("--label-fraction", gen.label_fraction, "Fraction flagged labeled")->capture_default_str();
  gen_cmd->add_option("--val-clips", gen.val_clips, "Clips reserved for validation")->capture_default_str();
  gen_cmd->add_option("--test-clips", gen.test_clips, "Clips reserved for testing")->capture_default_str();

  PretrainOptions pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Masked-autoencoder pretraining");
  add_common(pre_cmd, pre.common);
  pre_cmd->add_option("--corpus", pre.corpus, "Manifest or corpus directory");
  pre_cmd->add_option("--split", pre.split, "Split file; pretraining uses its train list");
  pre_cmd->add_option("--strategy", pre.strategy, "adaptive, random, tube or frame");
  pre_cmd->add_option("--ratio", pre.ratio, "Masking ratio in (0, 1)");
  pre_cmd->add_option("--epochs", pre.epochs);
  pre_cmd->add_option("--batch-size", pre.batch_size);
  pre_cmd->add_option("--out", pre.out, "Output directory");
  pre_cmd->add_option("--resume", pre.resume, "Checkpoint to resume from");
  pre_cmd->add_option("--checkpoint-every", pre.checkpoint_every, "Steps between checkpoints");
  pre_cmd->add_option("--stop-after", pre.stop_after, "Stop once this many steps are done");
  pre_cmd->add_option("--log-every", pre.log_every, "Steps between progress lines")->capture_default_str();

  FinetuneOptions ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Fine-tune a phase classifier");
  add_common(ft_cmd, ft.common);
  ft_cmd->add_option("--checkpoint", ft.checkpoint, "Pretrained checkpoint");
  ft_cmd->add_flag("--scratch", ft.scratch, "Start from random weights");
  ft_cmd->add_option("--corpus", ft.corpus, "Manifest or corpus directory");
  ft_cmd->add_option("--split", ft.split, "Split file");
  ft_cmd->add_option("--label-fraction", ft.label_fraction, "Use the first ceil(f*|train|) train clips");
  ft_cmd->add_option("--epochs", ft.epochs);
  ft_cmd->add_option("--out", ft.out, "Output directory");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a fine-tuned classifier on the test split");
  add_common(ev_cmd, ev.common);
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "Fine-tuned checkpoint")->required();
  ev_cmd->add_option("--corpus", ev.corpus, "Manifest or corpus directory");
  ev_cmd->add_option("--split", ev.split, "Split file");
  ev_cmd->add_option("--out", ev.out, "Metrics JSON file");

  ReconstructOptions rec;
  auto* rec_cmd = app.add_subcommand("reconstruct", "Write original, masked and reconstructed frames");
  add_common(rec_cmd, rec.common);
  rec_cmd->add_option("--checkpoint", rec.checkpoint, "Pretrained checkpoint")->required();
  rec_cmd->add_option("--clip", rec.clip, "CSVC clip file")->required();
  rec_cmd->add_option("--ratio", rec.ratio, "Masking ratio");
  rec_cmd->add_option("--strategy", rec.strategy, "adaptive, random, tube or frame");
  rec_cmd->add_option("--out-dir", rec.out_dir, "Image directory")->required();

  AblateOptions ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Pretrain and fine-tune once per axis value");
  add_common(ab_cmd, ab.common);
  ab_cmd->add_option("--axis", ab.axis, "ratio, decoder-depth, strategy or loss")->required();
  ab_cmd->add_option("--values", ab.values, "Comma-separated values")->required()->delimiter(',');
  ab_cmd->add_option("--corpus", ab.corpus, "Manifest or corpus directory");
  ab_cmd->add_option("--split", ab.split, "Split file");
  ab_cmd->add_option("--label-fraction", ab.label_fraction);
  ab_cmd->add_option("--out", ab.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, out);
    if (pre_cmd->parsed()) return cmd_pretrain(pre, out);
    if (ft_cmd->parsed()) return cmd_finetune(ft, out);
    if (ev_cmd->parsed()) return cmd_eval(ev, out);
    if (rec_cmd->parsed()) return cmd_reconstruct(rec, out);
    if (ab_cmd->parsed()) return cmd_ablate(ab, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "corrupt artifact: " << e.what() << "\n";
    return kCorrupt;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kCorrupt;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace csmae
