#include "tse/config.hpp"

#include <fstream>

#include "tse/error.hpp"
#include "tse/json_util.hpp"

namespace tse {

using nlohmann::json;

namespace {

json to_json(const DataConfig& d) {
  return {{"corpus", d.corpus},
          {"unlabeled_corpus", d.unlabeled_corpus},
          {"val_items", d.val_items},
          {"val_seed", d.val_seed}};
}

DataConfig data_config_from_json(const json& j) {
  DataConfig d;
  ConfigReader(j, "data")
      .get("corpus", d.corpus)
      .get("unlabeled_corpus", d.unlabeled_corpus)
      .get("val_items", d.val_items)
      .get("val_seed", d.val_seed)
      .finish();
  require(d.val_items >= 1, Errc::kConfig, "data.val_items must be at least 1");
  return d;
}

}  // namespace

json to_json(const RunConfig& cfg) {
  return {{"embedder", to_json(cfg.embedder)}, {"pretrain", to_json(cfg.pretrain)},
          {"exformer", to_json(cfg.exformer)}, {"train", to_json(cfg.train)},
          {"semi", to_json(cfg.semi)},         {"mix", to_json(cfg.mix)},
          {"data", to_json(cfg.data)},         {"seed", cfg.seed}};
}

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  json embedder = json::object(), pretrain = json::object(), exformer = json::object(),
       train = json::object(), semi = json::object(), mix = json::object(), data = json::object();
  ConfigReader(j, "config")
      .get("embedder", embedder)
      .get("pretrain", pretrain)
      .get("exformer", exformer)
      .get("train", train)
      .get("semi", semi)
      .get("mix", mix)
      .get("data", data)
      .get("seed", cfg.seed)
      .finish();
  cfg.embedder = embedder_config_from_json(embedder);
  cfg.pretrain = pretrain_config_from_json(pretrain);
  cfg.exformer = exformer_config_from_json(exformer);
  cfg.train = train_config_from_json(train, TrainConfig::stage1());
  cfg.semi = train_config_from_json(semi, TrainConfig::stage2());
  cfg.mix = mixing_config_from_json(mix);
  cfg.data = data_config_from_json(data);
  require(cfg.exformer.embed_dim == cfg.embedder.embed_dim, Errc::kConfig,
          "exformer.embed_dim must equal embedder.embed_dim");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kMissingFile, "cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::kConfig, path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, Errc::kConfig,
          "override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    require(!part.empty(), Errc::kConfig, "override key '" + key + "' has an empty component");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    require(node->is_object() || node->is_null(), Errc::kConfig,
            "override key '" + key + "' descends into a non-object");
    start = dot + 1;
  }
}

}  // namespace tse
