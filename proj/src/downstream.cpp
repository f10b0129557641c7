#include "csmae/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "csmae/config.hpp"
#include "csmae/errors.hpp"
#include "csmae/ops.hpp"
#include "json.hpp"

namespace csmae {

void FinetuneConfig::validate() const {
  if (epochs == 0) throw ConfigError("finetune.epochs must be positive");
  if (batch_size == 0) throw ConfigError("finetune.batch_size must be positive");
  if (!(lr > 0)) throw ConfigError("finetune.lr must be positive");
  if (min_lr < 0 || min_lr > lr) throw ConfigError("finetune.min_lr must be in [0, lr]");
  if (grad_clip < 0) throw ConfigError("finetune.grad_clip must be non-negative");
  if (patience == 0) throw ConfigError("finetune.patience must be positive");
  if (!(encoder_lr_scale >= 0)) throw ConfigError("finetune.encoder_lr_scale must be non-negative");
  if (!(label_fraction >= 0 && label_fraction <= 1)) throw ConfigError("finetune.label_fraction must be in [0, 1]");
}

ClassifierHead make_head(ParamSet& params, std::size_t in_dim, std::size_t num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
  ClassifierHead head;
  head.linear = nn::make_linear(params, "head", in_dim, num_classes, rng);
  head.num_classes = num_classes;
  return head;
}

Tensor pooled_features(const Tensor& patches, const ModelParams& model) {
  const Tensor tokens = embed_patches(patches, model.tokenizer_config, model.tokenizer);
  return ops::mean(encode_tokens(tokens, model), 0);
}

void fit_standardization(ClassifierHead& head, std::span<const Tensor> pooled, double eps) {
  if (pooled.empty()) throw ContractError("standardization needs at least one feature row");
  const std::size_t d = pooled.front().numel();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (const auto& row : pooled) {
    if (row.numel() != d) throw DimensionError("pooled feature rows differ in width");
    for (std::size_t j = 0; j < d; ++j) mean[j] += row.data()[j];
  }
  for (auto& m : mean) m /= static_cast<double>(pooled.size());
  for (const auto& row : pooled) {
    for (std::size_t j = 0; j < d; ++j) {
      const double z = row.data()[j] - mean[j];
      var[j] += z * z;
    }
  }
  std::vector<Real> center(d), inv_scale(d);
  for (std::size_t j = 0; j < d; ++j) {
    center[j] = static_cast<Real>(mean[j]);
    inv_scale[j] = static_cast<Real>(1.0 / (std::sqrt(var[j] / static_cast<double>(pooled.size())) + eps));
  }
  head.center = Tensor({1, d}, std::move(center));
  head.inv_scale = Tensor({1, d}, std::move(inv_scale));
}

Tensor classify_clip(const Tensor& patches, const ModelParams& model, const ClassifierHead& head) {
  Tensor x = pooled_features(patches, model);
  if (head.center.defined()) x = ops::mul(ops::sub(x, head.center), head.inv_scale);
  return head.linear(x);
}

void SplitSpec::validate() const {
  std::set<std::size_t> seen;
  for (const auto* list : {&train, &val, &test}) {
    for (std::size_t id : *list) {
      if (!seen.insert(id).second) throw ConfigError("split lists overlap at clip " + std::to_string(id));
    }
  }
  if (!(label_fraction >= 0 && label_fraction <= 1)) throw ConfigError("split label_fraction must be in [0, 1]");
}

std::string SplitSpec::to_json() const {
  nlohmann::ordered_json j;
  j["train"] = train;
  j["val"] = val;
  j["test"] = test;
  j["label_fraction"] = label_fraction;
  return j.dump(2);
}

SplitSpec SplitSpec::from_json(const std::string& text) {
  SplitSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, value] : j.items()) {
      if (key == "train") {
        s.train = value.get<std::vector<std::size_t>>();
      } else if (key == "val") {
        s.val = value.get<std::vector<std::size_t>>();
      } else if (key == "test") {
        s.test = value.get<std::vector<std::size_t>>();
      } else if (key == "label_fraction") {
        s.label_fraction = value.get<double>();
      } else {
        throw ConfigError("unknown split key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed split file: ") + e.what());
  }
  s.validate();
  return s;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["jaccard"] = jaccard;
  j["num_classes"] = num_classes;
  j["confusion"] = confusion;
  return j.dump(2);
}

MetricsReport compute_metrics(std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
                              std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("metrics need at least one labeled example");
  MetricsReport r;
  r.num_classes = num_classes;
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw IndexError("class index out of range at example " + std::to_string(i));
    }
    ++r.confusion[labels[i]][predictions[i]];
    if (labels[i] == predictions[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  double p_sum = 0, r_sum = 0, j_sum = 0;
  std::size_t p_n = 0, present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tp = r.confusion[c][c], fn = 0, fp = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (k == c) continue;
      fn += r.confusion[c][k];
      fp += r.confusion[k][c];
    }
    if (tp + fn == 0) continue;  // class absent from the labels
    ++present;
    r_sum += static_cast<double>(tp) / static_cast<double>(tp + fn);
    j_sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    if (tp + fp > 0) {
      p_sum += static_cast<double>(tp) / static_cast<double>(tp + fp);
      ++p_n;
    }
  }
  r.recall = r_sum / static_cast<double>(present);
  r.jaccard = j_sum / static_cast<double>(present);
  r.precision = p_n > 0 ? p_sum / static_cast<double>(p_n) : 0.0;
  return r;
}

std::vector<std::size_t> training_clip_ids(const SplitSpec& split, const FinetuneData& data,
                                           const FinetuneConfig& cfg) {
  std::vector<std::size_t> ids;
  if (cfg.label_fraction > 0) {
    const std::size_t k = labeled_clip_count(split.train.size(), cfg.label_fraction);
    ids.assign(split.train.begin(), split.train.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    for (std::size_t id : split.train) {
      if (id >= data.labeled.size()) throw IndexError("train clip " + std::to_string(id) + " has no labeled flag");
      if (data.labeled[id]) ids.push_back(id);
    }
  }
  return ids;
}

std::vector<std::size_t> predict(const FinetuneData& data, std::span<const std::size_t> ids, const ModelParams& model,
                                 const ClassifierHead& head, const AccessHook& hook, AccessPurpose purpose) {
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (std::size_t id : ids) {
    if (id >= data.clips.size()) throw IndexError("clip id " + std::to_string(id) + " out of range");
    if (hook) hook(id, purpose);
    const Tensor scores = classify_clip(data.clips[id].patches, model, head);
    const auto logits = scores.data();
    out.push_back(static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin()));
  }
  return out;
}

namespace {

bool finetuned(const std::string& name) { return name.rfind("tok.", 0) == 0 || name.rfind("enc.", 0) == 0; }

void load_pretrained(const Checkpoint& ck, ModelParams& model) {
  const std::string stored_text = ck.get_text("meta/config");
  nlohmann::json stored;
  try {
    stored = nlohmann::json::parse(stored_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config snapshot is not JSON: ") + e.what());
  }
  nlohmann::ordered_json current = {{"tokenizer", to_json(model.tokenizer_config)},
                                    {"backbone", to_json(model.backbone_config)}};
  nlohmann::json stored_arch = {{"tokenizer", stored.value("tokenizer", nlohmann::json())},
                                {"backbone", stored.value("backbone", nlohmann::json())}};
  const auto diff = config_diff(stored_arch.dump(), nlohmann::json(current).dump());
  if (!diff.empty()) {
    std::string message = "pretrained checkpoint architecture differs:";
    for (const auto& line : diff) message += "\n  " + line;
    throw ConfigError(message);
  }
  for (auto& p : model.params) {
    if (!finetuned(p.name)) continue;
    const Tensor& src = ck.get("phi/" + p.name);
    if (src.shape() != p.tensor.shape()) {
      throw FormatError("checkpoint entry phi/" + p.name + " has shape " + shape_str(src.shape()) + ", expected " +
                        shape_str(p.tensor.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), p.tensor.data().begin());
  }
}

std::vector<std::vector<Real>> snapshot(const ParamSet& params) {
  std::vector<std::vector<Real>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(ParamSet& params, const std::vector<std::vector<Real>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(values[i].begin(), values[i].end(), params[i].tensor.data().begin());
  }
}

double accuracy_of(const FinetuneData& data, std::span<const std::size_t> ids, const std::vector<std::size_t>& pred) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) correct += pred[i] == data.clips[ids[i]].phase;
  return static_cast<double>(correct) / static_cast<double>(ids.size());
}

}  // namespace

FinetuneResult finetune_run(const FinetuneData& data, const SplitSpec& split, const Checkpoint* pretrained,
                            const TokenizerConfig& tokenizer, const BackboneConfig& backbone,
                            const FinetuneConfig& cfg, const AccessHook& hook) {
  cfg.validate();
  split.validate();
  if (split.test.empty()) throw ConfigError("split has no test clips");
  for (const auto* list : {&split.train, &split.val, &split.test}) {
    for (std::size_t id : *list) {
      if (id >= data.clips.size()) throw IndexError("split references clip " + std::to_string(id) + " of " +
                                                    std::to_string(data.clips.size()));
    }
  }

  Rng rng = Rng::derive(cfg.seed, {0xF17Eu});
  ModelParams model = make_model(tokenizer, backbone, rng);
  if (pretrained != nullptr) load_pretrained(*pretrained, model);

  FinetuneResult result;
  ParamSet& trainable = result.params;
  for (const auto& p : model.params) {
    if (finetuned(p.name)) trainable.add(p.name, p.tensor, p.decay);
  }
  ClassifierHead head = make_head(trainable, backbone.encoder_dim, data.num_classes, rng);

  const std::vector<std::size_t> ids = training_clip_ids(split, data, cfg);
  if (ids.empty()) throw ConfigError("no labeled training clips in the split");
  result.train_clips = ids.size();
  {
    std::vector<Tensor> pooled;
    for (std::size_t id : ids) {
      if (hook) hook(id, AccessPurpose::train);
      pooled.push_back(pooled_features(data.clips[id].patches, model));
    }
    fit_standardization(head, pooled);
  }
  result.center = head.center;
  result.inv_scale = head.inv_scale;

  const std::size_t spe = (ids.size() + cfg.batch_size - 1) / cfg.batch_size;
  CosineSchedule schedule;
  schedule.base_lr = cfg.lr;
  schedule.min_lr = cfg.min_lr;
  schedule.total_steps = cfg.epochs * spe;
  schedule.warmup_steps = std::min(cfg.warmup_steps, schedule.total_steps - 1);
  AdamWConfig adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;
  ParamSet body, head_params;
  for (const auto& p : trainable) (finetuned(p.name) ? body : head_params).add(p.name, p.tensor, p.decay);
  OptimizerState body_opt = OptimizerState::for_params(body, adam);
  OptimizerState head_opt = OptimizerState::for_params(head_params, adam);

  std::vector<std::vector<Real>> best = snapshot(trainable);
  double best_val = -1;
  std::size_t stale = 0, step = 0;
  std::vector<std::size_t> order = ids;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle = Rng::derive(cfg.seed, {0xF1E0u, epoch});
    shuffle.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      trainable.zero_grad();
      Tape tape;
      Tensor loss;
      {
        Tape::Scope scope(tape);
        std::vector<Tensor> rows;
        std::vector<std::size_t> labels;
        for (std::size_t i = start; i < end; ++i) {
          if (hook) hook(order[i], AccessPurpose::train);
          rows.push_back(classify_clip(data.clips[order[i]].patches, model, head));
          labels.push_back(data.clips[order[i]].phase);
        }
        loss = ops::cross_entropy(ops::concat_rows(rows), labels);
      }
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite fine-tuning loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      if (cfg.grad_clip > 0) clip_grad_norm(trainable, cfg.grad_clip);
      head_opt.config.lr = schedule.at(step);
      adamw_step(head_params, head_opt);
      if (cfg.encoder_lr_scale > 0) {
        body_opt.config.lr = schedule.at(step) * cfg.encoder_lr_scale;
        adamw_step(body, body_opt);
      }
    }
    result.epochs_run = epoch + 1;

    if (split.val.empty()) {
      best = snapshot(trainable);
      result.best_epoch = epoch;
      continue;
    }
    const auto pred = predict(data, split.val, model, head, hook, AccessPurpose::validate);
    const double acc = accuracy_of(data, split.val, pred);
    if (acc > best_val) {
      best_val = acc;
      best = snapshot(trainable);
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  restore(trainable, best);
  result.best_val_accuracy = std::max(best_val, 0.0);

  const auto pred = predict(data, split.test, model, head, hook, AccessPurpose::test);
  std::vector<std::size_t> labels;
  for (std::size_t id : split.test) labels.push_back(data.clips[id].phase);
  result.test = compute_metrics(pred, labels, data.num_classes);
  return result;
}

Checkpoint classifier_checkpoint(const FinetuneResult& result, const TokenizerConfig& tokenizer,
                                 const BackboneConfig& backbone, std::size_t num_classes) {
  nlohmann::ordered_json meta = {{"kind", "classifier"},
                                 {"tokenizer", to_json(tokenizer)},
                                 {"backbone", to_json(backbone)},
                                 {"num_classes", num_classes}};
  Checkpoint ck;
  ck.put_text("meta/config", meta.dump());
  ck.put_params("ft/", result.params);
  if (result.center.defined()) {
    ck.put("ft_norm/center", result.center);
    ck.put("ft_norm/inv_scale", result.inv_scale);
  }
  return ck;
}

Classifier load_classifier(const Checkpoint& checkpoint) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(checkpoint.get_text("meta/config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config snapshot is not JSON: ") + e.what());
  }
  if (meta.value("kind", "") != "classifier") {
    throw ConfigError("checkpoint holds no fine-tuned classifier (expected the output of finetune)");
  }
  TokenizerConfig tokenizer;
  BackboneConfig backbone;
  std::size_t num_classes = 0;
  try {
    from_json(meta.at("tokenizer"), tokenizer);
    from_json(meta.at("backbone"), backbone);
    num_classes = meta.at("num_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("classifier checkpoint metadata: ") + e.what());
  }
  Rng rng(0);
  Classifier c{make_model(tokenizer, backbone, rng), {}};
  ParamSet loaded;
  for (const auto& p : c.model.params) {
    if (finetuned(p.name)) loaded.add(p.name, p.tensor, p.decay);
  }
  c.head = make_head(loaded, backbone.encoder_dim, num_classes, rng);
  checkpoint.load_params("ft/", loaded);
  if (checkpoint.contains("ft_norm/center")) {
    c.head.center = checkpoint.get("ft_norm/center").clone();
    c.head.inv_scale = checkpoint.get("ft_norm/inv_scale").clone();
    if (c.head.center.numel() != backbone.encoder_dim || c.head.inv_scale.numel() != backbone.encoder_dim) {
      throw FormatError("classifier standardization width does not match the encoder");
    }
  }
  return c;
}

}  // namespace csmae
