#pragma once

#include <cstdint>
#include "json.hpp"
#include <optional>
#include <string>

#include "csmae/backbone.hpp"
#include "csmae/data.hpp"
#include "csmae/downstream.hpp"
#include "csmae/masking.hpp"
#include "csmae/tokenizer.hpp"
#include "csmae/training.hpp"

namespace csmae {

// Serialization of every configuration block. Parsing rejects unknown keys with a
// ConfigError; missing keys keep their defaults.
nlohmann::ordered_json to_json(const SynthConfig& cfg);
nlohmann::ordered_json to_json(const TokenizerConfig& cfg);
nlohmann::ordered_json to_json(const BackboneConfig& cfg);
nlohmann::ordered_json to_json(const SelectionConfig& cfg);
nlohmann::ordered_json to_json(const PretrainConfig& cfg);
nlohmann::ordered_json to_json(const FinetuneConfig& cfg);

void from_json(const nlohmann::json& j, SynthConfig& cfg);
void from_json(const nlohmann::json& j, TokenizerConfig& cfg);
void from_json(const nlohmann::json& j, BackboneConfig& cfg);
void from_json(const nlohmann::json& j, SelectionConfig& cfg);
void from_json(const nlohmann::json& j, PretrainConfig& cfg);
void from_json(const nlohmann::json& j, FinetuneConfig& cfg);

struct PathsConfig {
  std::string corpus;
  std::string split;
  std::string out;
  std::string checkpoint;
};

// The resolved document a CLI run works from.
struct RunConfig {
  SynthConfig synth;
  TokenizerConfig tokenizer;
  BackboneConfig backbone;
  SelectionConfig selection;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  PathsConfig paths;
  std::uint64_t seed = 0;

  // Applies the top-level seed to pretrain/finetune and keeps dependent sizes
  // (selection dim, backbone patch length) consistent with the tokenizer.
  void resolve();
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// FNV-1a 64-bit hash rendered as 16 hex digits.
std::string config_hash(const std::string& text);

}  // namespace csmae
