#include "csmae/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "csmae/errors.hpp"

namespace csmae {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// Reads known keys from one object and rejects anything left over.
class FieldReader {
 public:
  FieldReader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ConfigError("config section '" + section_ + "' must be an object");
  }

  template <typename T>
  FieldReader& operator()(const char* key, T& value) {
    known_.insert(key);
    if (!j_.contains(key)) return *this;
    try {
      value = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + section_ + "." + key + "': " + e.what());
    }
    return *this;
  }

  template <typename T, typename Parse>
  FieldReader& parsed(const char* key, T& value, Parse parse) {
    std::string text;
    known_.insert(key);
    if (!j_.contains(key)) return *this;
    (*this)(key, text);
    value = parse(text);
    return *this;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!known_.count(key)) throw ConfigError("unknown config key '" + section_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> known_;
};

}  // namespace

ojson to_json(const SynthConfig& c) {
  return {{"frames", c.frames},
          {"height", c.height},
          {"width", c.width},
          {"num_phases", c.num_phases},
          {"motion_speed_min", c.motion_speed_min},
          {"motion_speed_max", c.motion_speed_max},
          {"shape_palette", c.shape_palette},
          {"background_texture_seed", c.background_texture_seed},
          {"background_jitter", c.background_jitter},
          {"noise_sigma", c.noise_sigma},
          {"color_coded_phases", c.color_coded_phases}};
}

void from_json(const json& j, SynthConfig& c) {
  FieldReader r(j, "synth");
  r("frames", c.frames)("height", c.height)("width", c.width)("num_phases", c.num_phases);
  r("motion_speed_min", c.motion_speed_min)("motion_speed_max", c.motion_speed_max);
  r("shape_palette", c.shape_palette)("background_texture_seed", c.background_texture_seed);
  r("background_jitter", c.background_jitter);
  r("noise_sigma", c.noise_sigma)("color_coded_phases", c.color_coded_phases);
  r.finish();
}

ojson to_json(const TokenizerConfig& c) {
  return {{"tubelet_t", c.tubelet_t}, {"tubelet_h", c.tubelet_h}, {"tubelet_w", c.tubelet_w},
          {"dim", c.dim},             {"channels", c.channels},   {"positional_encoding", c.positional_encoding}};
}

void from_json(const json& j, TokenizerConfig& c) {
  FieldReader r(j, "tokenizer");
  r("tubelet_t", c.tubelet_t)("tubelet_h", c.tubelet_h)("tubelet_w", c.tubelet_w)("dim", c.dim);
  r("channels", c.channels)("positional_encoding", c.positional_encoding);
  r.finish();
}

ojson to_json(const BackboneConfig& c) {
  return {{"encoder_depth", c.encoder_depth},   {"encoder_dim", c.encoder_dim},
          {"encoder_heads", c.encoder_heads},   {"encoder_mlp_ratio", c.encoder_mlp_ratio},
          {"decoder_depth", c.decoder_depth},   {"decoder_dim", c.decoder_dim},
          {"decoder_heads", c.decoder_heads},   {"decoder_mlp_ratio", c.decoder_mlp_ratio},
          {"patch_length", c.patch_length}};
}

void from_json(const json& j, BackboneConfig& c) {
  FieldReader r(j, "backbone");
  r("encoder_depth", c.encoder_depth)("encoder_dim", c.encoder_dim)("encoder_heads", c.encoder_heads);
  r("encoder_mlp_ratio", c.encoder_mlp_ratio)("decoder_depth", c.decoder_depth)("decoder_dim", c.decoder_dim);
  r("decoder_heads", c.decoder_heads)("decoder_mlp_ratio", c.decoder_mlp_ratio)("patch_length", c.patch_length);
  r.finish();
}

ojson to_json(const SelectionConfig& c) { return {{"dim", c.dim}, {"heads", c.heads}}; }

void from_json(const json& j, SelectionConfig& c) {
  FieldReader r(j, "selection");
  r("dim", c.dim)("heads", c.heads);
  r.finish();
}

ojson to_json(const PretrainConfig& c) {
  return {{"ratio", c.ratio},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"min_lr", c.min_lr},
          {"warmup_steps", c.warmup_steps},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"loss", to_string(c.loss)},
          {"normalize_targets", c.normalize_targets},
          {"strategy", to_string(c.strategy)},
          {"selection_weight", c.selection_weight},
          {"seed", c.seed}};
}

void from_json(const json& j, PretrainConfig& c) {
  FieldReader r(j, "pretrain");
  r("ratio", c.ratio)("epochs", c.epochs)("batch_size", c.batch_size)("lr", c.lr)("min_lr", c.min_lr);
  r("warmup_steps", c.warmup_steps)("beta1", c.beta1)("beta2", c.beta2)("weight_decay", c.weight_decay);
  r("grad_clip", c.grad_clip)("normalize_targets", c.normalize_targets)("selection_weight", c.selection_weight);
  r("seed", c.seed);
  r.parsed("loss", c.loss, parse_loss_kind);
  r.parsed("strategy", c.strategy, parse_strategy);
  r.finish();
}

ojson to_json(const FinetuneConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"min_lr", c.min_lr},
          {"warmup_steps", c.warmup_steps},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"encoder_lr_scale", c.encoder_lr_scale},
          {"patience", c.patience},
          {"label_fraction", c.label_fraction},
          {"seed", c.seed}};
}

void from_json(const json& j, FinetuneConfig& c) {
  FieldReader r(j, "finetune");
  r("epochs", c.epochs)("batch_size", c.batch_size)("lr", c.lr)("min_lr", c.min_lr);
  r("warmup_steps", c.warmup_steps)("weight_decay", c.weight_decay)("grad_clip", c.grad_clip);
  r("encoder_lr_scale", c.encoder_lr_scale)("patience", c.patience)("label_fraction", c.label_fraction)("seed", c.seed);
  r.finish();
}

void RunConfig::resolve() {
  pretrain.seed = seed;
  finetune.seed = seed;
  selection.dim = tokenizer.dim;
  backbone.encoder_dim = tokenizer.dim;
  backbone.patch_length = tokenizer.patch_length();
}

void RunConfig::validate() const {
  synth.validate();
  tokenizer.validate();
  backbone.validate();
  pretrain.validate();
  finetune.validate();
}

ojson to_json(const RunConfig& c) {
  ojson paths = {{"corpus", c.paths.corpus}, {"split", c.paths.split}, {"out", c.paths.out},
                 {"checkpoint", c.paths.checkpoint}};
  return {{"synth", to_json(c.synth)},       {"tokenizer", to_json(c.tokenizer)}, {"backbone", to_json(c.backbone)},
          {"selection", to_json(c.selection)}, {"pretrain", to_json(c.pretrain)}, {"finetune", to_json(c.finetune)},
          {"paths", paths},                    {"seed", c.seed}};
}

RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const std::set<std::string> sections = {"synth", "tokenizer", "backbone", "selection", "pretrain", "finetune",
                                          "paths", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!sections.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (j.contains("synth")) from_json(j["synth"], c.synth);
  if (j.contains("tokenizer")) from_json(j["tokenizer"], c.tokenizer);
  if (j.contains("backbone")) from_json(j["backbone"], c.backbone);
  if (j.contains("selection")) from_json(j["selection"], c.selection);
  if (j.contains("pretrain")) from_json(j["pretrain"], c.pretrain);
  if (j.contains("finetune")) from_json(j["finetune"], c.finetune);
  if (j.contains("paths")) {
    FieldReader r(j["paths"], "paths");
    r("corpus", c.paths.corpus)("split", c.paths.split)("out", c.paths.out)("checkpoint", c.paths.checkpoint);
    r.finish();
  }
  if (j.contains("seed")) {
    FieldReader r(j, "");
    r("seed", c.seed);
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace csmae
