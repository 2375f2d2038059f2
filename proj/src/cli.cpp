#include "tse/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tse/audio_io.hpp"
#include "tse/config.hpp"
#include "tse/error.hpp"
#include "tse/manifest.hpp"
#include "tse/synth.hpp"
#include "tse/training.hpp"

namespace tse::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON run configuration");
  cmd->add_option("--set", c.overrides, "Override a config key, e.g. --set train.max_epochs=10")
      ->take_all();
  cmd->add_option("--seed", c.seed, "Run seed (overrides the config)");
}

RunConfig resolve(const Common& c, const std::vector<std::string>& extra = {}) {
  json doc = json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) fail(Errc::kMissingFile, "cannot open config " + c.config_path);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      fail(Errc::kConfig, c.config_path + ": " + e.what());
    }
  }
  for (const auto& o : c.overrides) apply_override(doc, o);
  for (const auto& o : extra) apply_override(doc, o);
  RunConfig cfg = run_config_from_json(doc);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void write_run_config(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  std::ofstream out(dir / "run_config.json", std::ios::trunc);
  if (!out) fail(Errc::kIo, "cannot write " + (dir / "run_config.json").string());
  out << to_json(cfg).dump(2) << '\n';
}

fs::path resolve_ckpt(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "best.ckpt";
  return p;
}

std::string zero_pad(std::size_t v, int width) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << v;
  return s.str();
}

std::vector<TrainItem> validation_items(const Corpus& corpus, const RunConfig& cfg) {
  MixingConfig mix = cfg.mix;
  mix.speed_perturb = false;
  MixingSource src(corpus, mix, cfg.data.val_seed, /*labeled=*/true);
  return draw_items(src, 0, static_cast<std::size_t>(cfg.data.val_items));
}

// ---- synth-data -----------------------------------------------------------

struct SynthArgs {
  int speakers = 8;
  int utts = 12;
  int first_speaker = 0;
  double min_duration = 2.0;
  double max_duration = 4.0;
  int test_mixtures = 0;
  std::string out;
};

void cmd_synth(const SynthArgs& a, const Common& c, std::ostream& out) {
  RunConfig cfg = resolve(c);
  require(a.speakers >= 1 && a.utts >= 1, Errc::kConfig, "--speakers and --utts must be positive");
  require(a.min_duration > 0 && a.max_duration >= a.min_duration, Errc::kConfig,
          "invalid duration range");
  const fs::path dir(a.out);
  fs::create_directories(dir / "wav");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> dur(a.min_duration, a.max_duration);
  std::vector<UtteranceRecord> records;
  Corpus corpus;
  for (int s = 0; s < a.speakers; ++s) {
    const int spk = a.first_speaker + s;
    for (int u = 0; u < a.utts; ++u) {
      const double d = std::round(dur(rng) * 100.0) / 100.0;
      Waveform w = synth_speaker_utterance(spk, d, rng());
      const std::string id = "spk" + zero_pad(static_cast<std::size_t>(spk), 4) + "_utt" +
                             zero_pad(static_cast<std::size_t>(u), 3);
      const std::string rel = "wav/" + id + ".wav";
      save_wav(dir / rel, w);
      records.push_back({id, spk, rel, w.duration_s()});
      corpus.by_speaker[spk].push_back(std::move(w));
    }
  }
  write_manifest(dir / "manifest.jsonl", records);

  if (a.test_mixtures > 0) {
    fs::create_directories(dir / "test");
    MixingConfig mix = cfg.mix;
    mix.speed_perturb = false;
    MixingSource src(corpus, mix, cfg.seed ^ 0x7e57u, /*labeled=*/true);
    std::vector<MixtureRecord> mixes;
    for (int k = 0; k < a.test_mixtures; ++k) {
      const TrainItem item = src.draw(static_cast<std::uint64_t>(k));
      const std::string id = "mix" + zero_pad(static_cast<std::size_t>(k), 4);
      // Paths are relative to the list file.
      MixtureRecord r{id, id + "_mixture.wav", id + "_enroll.wav", id + "_target.wav",
                      id + "_residual.wav"};
      save_wav(dir / "test" / r.mixture, item.mixture);
      save_wav(dir / "test" / r.enrollment, item.enrollment);
      save_wav(dir / "test" / r.target, *item.target);
      save_wav(dir / "test" / r.residual, *item.residual);
      mixes.push_back(r);
    }
    write_mixture_list(dir / "test" / "mixtures.jsonl", mixes);
  }
  write_run_config(dir, cfg);
  out << json{{"manifest", (dir / "manifest.jsonl").string()},
              {"utterances", records.size()},
              {"test_mixtures", a.test_mixtures}}
             .dump()
      << '\n';
}

// ---- pretrain-embedder ----------------------------------------------------

void cmd_pretrain(const std::string& corpus_path, const std::string& out_dir, const Common& c,
                  std::ostream& out) {
  std::vector<std::string> extra;
  if (!corpus_path.empty()) extra.push_back("data.corpus=\"" + corpus_path + "\"");
  RunConfig cfg = resolve(c, extra);
  require(!cfg.data.corpus.empty(), Errc::kConfig, "no corpus given (--corpus or data.corpus)");
  if (c.seed) cfg.pretrain.seed = cfg.seed;
  const fs::path dir(out_dir);
  write_run_config(dir, cfg);

  const Corpus corpus = load_corpus(cfg.data.corpus);
  PretrainResult res = pretrain_embedder(corpus, cfg.embedder, cfg.pretrain);
  save_embedder(dir / "embedder.ckpt", res.embedder, &res.ge2e);
  std::ofstream log(dir / "pretrain_log.jsonl", std::ios::trunc);
  for (std::size_t i = 0; i < res.losses.size(); ++i) {
    log << json{{"step", i + 1}, {"loss", res.losses[i]}}.dump() << '\n';
  }
  out << json{{"checkpoint", (dir / "embedder.ckpt").string()},
              {"initial_loss", res.losses.empty() ? 0.0 : res.losses.front()},
              {"final_loss", res.losses.empty() ? 0.0 : res.losses.back()}}
             .dump()
      << '\n';
}

// ---- train / train-semi ---------------------------------------------------

struct TrainArgs {
  std::string corpus;
  std::string unlabeled;
  std::string embedder;
  std::string stage1;
  std::string fusion;
  std::string out;
  std::optional<double> p;
  bool resume = false;
};

void cmd_train(const TrainArgs& a, const Common& c, bool semi, std::ostream& out) {
  std::vector<std::string> extra;
  if (!a.corpus.empty()) extra.push_back("data.corpus=\"" + a.corpus + "\"");
  if (!a.unlabeled.empty()) extra.push_back("data.unlabeled_corpus=\"" + a.unlabeled + "\"");
  if (!a.fusion.empty()) extra.push_back("exformer.fusion=\"" + a.fusion + "\"");
  if (a.p) extra.push_back("semi.unlabeled_prob=" + json(*a.p).dump());
  RunConfig cfg = resolve(c, extra);
  TrainConfig& tc = semi ? cfg.semi : cfg.train;
  if (c.seed) tc.seed = cfg.seed;
  require(!cfg.data.corpus.empty(), Errc::kConfig, "no labeled corpus given (--corpus or data.corpus)");
  const fs::path dir(a.out);
  write_run_config(dir, cfg);

  const Corpus corpus = load_corpus(cfg.data.corpus);
  const auto validation = validation_items(corpus, cfg);
  MixingSource labeled(corpus, cfg.mix, tc.seed, /*labeled=*/true);
  TrainOutputs outputs;
  outputs.out_dir = dir;
  outputs.resume = a.resume;

  TrainResult res;
  if (!semi) {
    require(!a.embedder.empty(), Errc::kConfig, "train needs --embedder <checkpoint>");
    Embedder embedder = load_embedder(fs::path(a.embedder));
    require(embedder->config().embed_dim == cfg.exformer.embed_dim, Errc::kConfig,
            "embedder dimension does not match exformer.embed_dim");
    Exformer model = make_exformer(cfg.exformer, tc.seed);
    res = train_supervised(model, embedder, labeled, validation, tc, outputs);
  } else {
    require(!a.stage1.empty(), Errc::kConfig, "train-semi needs --stage1 <checkpoint>");
    require(!cfg.data.unlabeled_corpus.empty(), Errc::kConfig,
            "no unlabeled corpus given (--unlabeled or data.unlabeled_corpus)");
    const Checkpoint stage1 = Checkpoint::load(resolve_ckpt(a.stage1));
    ExformerBundle bundle = load_exformer(stage1);
    require(to_json(bundle.model->config()) == to_json(cfg.exformer), Errc::kCheckpointMismatch,
            "stage-1 checkpoint was trained with a different exformer configuration");
    const Corpus unlabeled_corpus = load_corpus(cfg.data.unlabeled_corpus);
    MixingSource unlabeled(unlabeled_corpus, cfg.mix, tc.seed ^ 0x0badc0deu, /*labeled=*/false);
    res = train_semi(stage1, bundle.model, bundle.embedder, labeled, unlabeled, validation, tc, outputs);
  }
  out << json{{"best_checkpoint", (dir / "best.ckpt").string()},
              {"best_val_loss", res.best_val},
              {"epochs", res.log.size()}}
             .dump()
      << '\n';
}

// ---- evaluate / extract ---------------------------------------------------

std::vector<TrainItem> load_mixture_items(const fs::path& list, int rate) {
  const auto base = list.parent_path();
  auto resolve_path = [&](const std::string& p) {
    fs::path q(p);
    return q.is_relative() ? base / q : q;
  };
  std::vector<TrainItem> items;
  for (const auto& r : read_mixture_list(list)) {
    require(!r.target.empty() && !r.residual.empty(), Errc::kInvalidArgument,
            "test mixture " + r.mix_id + " has no reference signals");
    items.push_back(TrainItem::make_labeled(
        load_wav(resolve_path(r.mixture), rate), load_wav(resolve_path(r.target), rate),
        load_wav(resolve_path(r.residual), rate), load_wav(resolve_path(r.enrollment), rate)));
  }
  return items;
}

void cmd_evaluate(const std::string& ckpt, const std::string& test, const std::string& out_dir,
                  const Common& c, std::ostream& out) {
  RunConfig cfg = resolve(c);
  ExformerBundle bundle = load_exformer(Checkpoint::load(resolve_ckpt(ckpt)));
  const auto items = load_mixture_items(test, kDefaultSampleRate);
  const EvalReport report = evaluate(bundle.model, bundle.embedder, items);
  const json j = to_json(report);
  if (!out_dir.empty()) {
    write_run_config(out_dir, cfg);
    std::ofstream(fs::path(out_dir) / "eval_report.json", std::ios::trunc) << j.dump(2) << '\n';
  }
  out << j.dump() << '\n';
}

void cmd_extract(const std::string& ckpt, const std::string& mixture, const std::string& enroll,
                 const std::string& out_t, const std::string& out_r, const Common& c,
                 std::ostream& out) {
  RunConfig cfg = resolve(c);
  ExformerBundle bundle = load_exformer(Checkpoint::load(resolve_ckpt(ckpt)));
  const Waveform x = load_wav(mixture);
  const Waveform e = load_wav(enroll);
  const Extraction res = extract(bundle.model, bundle.embedder, x, e);
  for (const auto& p : {out_t, out_r}) {
    const auto parent = fs::absolute(fs::path(p)).parent_path();
    fs::create_directories(parent);
  }
  save_wav(out_t, res.target);
  save_wav(out_r, res.residual);
  write_run_config(fs::absolute(fs::path(out_t)).parent_path(), cfg);
  out << json{{"target", out_t}, {"residual", out_r}, {"samples", res.target.size()}}.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Target speaker extraction toolkit", args.empty() ? "exformer" : args.front()};
  app.require_subcommand(1);

  Common common;
  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic multi-speaker corpus");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--speakers", synth.speakers, "Number of speakers");
  synth_cmd->add_option("--utts", synth.utts, "Utterances per speaker");
  synth_cmd->add_option("--first-speaker", synth.first_speaker, "Id of the first speaker");
  synth_cmd->add_option("--min-duration", synth.min_duration, "Shortest utterance, seconds");
  synth_cmd->add_option("--max-duration", synth.max_duration, "Longest utterance, seconds");
  synth_cmd->add_option("--test-mixtures", synth.test_mixtures, "Also write this many labeled test mixtures");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  std::string pre_corpus, pre_out;
  auto* pre_cmd = app.add_subcommand("pretrain-embedder", "Pretrain the speaker embedder with GE2E");
  add_common(pre_cmd, common);
  pre_cmd->add_option("--corpus", pre_corpus, "Corpus manifest (JSON lines)");
  pre_cmd->add_option("--out", pre_out, "Output directory")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Stage 1: supervised training");
  add_common(train_cmd, common);
  train_cmd->add_option("--corpus", train.corpus, "Labeled corpus manifest");
  train_cmd->add_option("--embedder", train.embedder, "Pretrained embedder checkpoint")->required();
  train_cmd->add_option("--fusion", train.fusion, "Embedding fusion")
      ->check(CLI::IsMember({"concat", "mult", "add"}));
  train_cmd->add_option("--out", train.out, "Output directory")->required();
  train_cmd->add_flag("--resume", train.resume, "Continue from <out>/last.ckpt");

  TrainArgs semi;
  auto* semi_cmd = app.add_subcommand("train-semi", "Stage 2: semi-supervised fine-tuning");
  add_common(semi_cmd, common);
  semi_cmd->add_option("--stage1", semi.stage1, "Stage-1 checkpoint")->required();
  semi_cmd->add_option("--corpus", semi.corpus, "Labeled corpus manifest");
  semi_cmd->add_option("--unlabeled", semi.unlabeled, "Unlabeled corpus manifest");
  semi_cmd->add_option("--fusion", semi.fusion, "Embedding fusion (must match stage 1)")
      ->check(CLI::IsMember({"concat", "mult", "add"}));
  semi_cmd->add_option("--p", semi.p, "Probability of drawing an unlabeled item");
  semi_cmd->add_option("--out", semi.out, "Output directory")->required();
  semi_cmd->add_flag("--resume", semi.resume, "Continue from <out>/last.ckpt");

  std::string eval_ckpt, eval_test, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint on labeled mixtures");
  add_common(eval_cmd, common);
  eval_cmd->add_option("--ckpt", eval_ckpt, "Extractor checkpoint or run directory")->required();
  eval_cmd->add_option("--test", eval_test, "Mixture list (JSON lines)")->required();
  eval_cmd->add_option("--out", eval_out, "Directory for the report and resolved config");

  std::string ex_ckpt, ex_mix, ex_enroll, ex_t, ex_r;
  auto* ex_cmd = app.add_subcommand("extract", "Extract the enrolled speaker from one mixture");
  add_common(ex_cmd, common);
  ex_cmd->add_option("--ckpt", ex_ckpt, "Extractor checkpoint or run directory")->required();
  ex_cmd->add_option("--mixture", ex_mix, "Mixture WAV")->required();
  ex_cmd->add_option("--enroll", ex_enroll, "Enrollment WAV")->required();
  ex_cmd->add_option("--out-target", ex_t, "Output WAV for the target")->required();
  ex_cmd->add_option("--out-residual", ex_r, "Output WAV for the residual")->required();

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());  // CLI11 consumes the vector from the back
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*synth_cmd) cmd_synth(synth, common, out);
    else if (*pre_cmd) cmd_pretrain(pre_corpus, pre_out, common, out);
    else if (*train_cmd) cmd_train(train, common, /*semi=*/false, out);
    else if (*semi_cmd) cmd_train(semi, common, /*semi=*/true, out);
    else if (*eval_cmd) cmd_evaluate(eval_ckpt, eval_test, eval_out, common, out);
    else if (*ex_cmd) cmd_extract(ex_ckpt, ex_mix, ex_enroll, ex_t, ex_r, common, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return e.code() == Errc::kConfig ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace tse::cli
