#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tse/data.hpp"
#include "tse/embedder.hpp"
#include "tse/exformer.hpp"
#include "tse/training.hpp"

namespace tse {

struct DataConfig {
  std::string corpus;            // labeled manifest
  std::string unlabeled_corpus;  // manifest for the unlabeled stream (stage 2)
  int val_items = 16;            // fixed held-out mixtures drawn from the corpus
  std::uint64_t val_seed = 1000003;
};

// Everything a run needs. Defaults are the full-scale model and training
// settings; desk-scale presets override sizes through the same keys.
struct RunConfig {
  EmbedderConfig embedder;
  PretrainConfig pretrain;
  ExformerConfig exformer;
  TrainConfig train = TrainConfig::stage1();
  TrainConfig semi = TrainConfig::stage2();
  MixingConfig mix;
  DataConfig data;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const RunConfig& cfg);

// Missing keys keep their defaults; unknown keys raise kConfig.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);

// Applies "a.b.c=value" overrides to a config document. The value is parsed
// as JSON when possible (numbers, booleans, quoted strings) and taken as a
// bare string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace tse
