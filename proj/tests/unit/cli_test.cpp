#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.hpp"
#include "tse/audio_io.hpp"
#include "tse/cli.hpp"
#include "tse/manifest.hpp"

namespace tse {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "exformer");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small model and data so the whole pipeline runs in a few seconds.
fs::path write_tiny_config(const fs::path& dir) {
  const nlohmann::json cfg = {
      {"seed", 3},
      {"embedder", {{"n_blstm_layers", 1}, {"hidden_units", 8}, {"embed_dim", 8}}},
      {"pretrain", {{"steps", 2}, {"segment_seconds", 0.5}}},
      {"exformer",
       {{"feature_dim", 16}, {"chunk_len", 8}, {"n_blocks", 1}, {"layers_per_path", 1},
        {"n_heads", 2}, {"ff_dim", 32}, {"embed_dim", 8}}},
      {"train", {{"max_epochs", 1}, {"epoch_draws", 2}}},
      {"semi", {{"max_epochs", 1}, {"epoch_draws", 2}, {"unlabeled_prob", 0.5}}},
      {"mix", {{"segment_seconds", 0.25}}},
      {"data", {{"val_items", 2}}}};
  const auto path = dir / "tiny.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"no-such-command"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"train", "--out", "x"}).code, cli::kExitUsage);  // --embedder missing
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
  const auto dir = testing::scratch_dir("cfg");
  const auto r = run_cli({"synth-data", "--out", dir.string(), "--set", "train.bogus=1"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST(Cli, RuntimeErrors) {
  const auto dir = testing::scratch_dir("rt");
  const auto r = run_cli({"extract", "--ckpt", (dir / "none.ckpt").string(), "--mixture", "a.wav",
                          "--enroll", "b.wav", "--out-target", "t.wav", "--out-residual", "r.wav"});
  EXPECT_EQ(r.code, cli::kExitRuntime);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

TEST(Cli, RerunsAreByteIdentical) {
  const auto dir = testing::scratch_dir("det");
  const auto cfg = write_tiny_config(dir).string();
  for (const char* tag : {"a", "b"}) {
    const auto root = dir / tag;
    ASSERT_EQ(run_cli({"synth-data", "--config", cfg, "--speakers", "4", "--utts", "4", "--min-duration", "0.6",
                       "--max-duration", "0.8", "--seed", "9", "--out", (root / "data").string()})
                  .code,
              0);
    ASSERT_EQ(run_cli({"pretrain-embedder", "--config", cfg, "--corpus", (root / "data" / "manifest.jsonl").string(),
                       "--out", (root / "emb").string()})
                  .code,
              0);
    ASSERT_EQ(run_cli({"train", "--config", cfg, "--corpus", (root / "data" / "manifest.jsonl").string(),
                       "--embedder", (root / "emb" / "embedder.ckpt").string(), "--out", (root / "s1").string()})
                  .code,
              0);
  }
  for (const char* f : {"data/manifest.jsonl", "data/wav/spk0002_utt003.wav", "emb/embedder.ckpt",
                        "emb/pretrain_log.jsonl", "s1/best.ckpt", "s1/last.ckpt", "s1/train_log.jsonl"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(Cli, EndToEndPipeline) {
  const auto dir = testing::scratch_dir("e2e");
  const auto cfg = write_tiny_config(dir).string();
  const auto data = (dir / "data").string();

  auto r = run_cli({"synth-data", "--config", cfg, "--speakers", "4", "--utts", "4", "--min-duration", "0.6",
                    "--max-duration", "0.8", "--test-mixtures", "2", "--out", data});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_manifest(dir / "data" / "manifest.jsonl").size(), 16u);
  EXPECT_TRUE(fs::exists(dir / "data" / "run_config.json"));

  r = run_cli({"synth-data", "--config", cfg, "--speakers", "2", "--utts", "3", "--first-speaker", "50",
               "--out", (dir / "unl").string()});
  ASSERT_EQ(r.code, 0) << r.err;

  r = run_cli({"pretrain-embedder", "--config", cfg, "--corpus", data + "/manifest.jsonl", "--out",
               (dir / "emb").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  ASSERT_TRUE(fs::exists(dir / "emb" / "embedder.ckpt"));

  r = run_cli({"train", "--config", cfg, "--corpus", data + "/manifest.jsonl", "--embedder",
               (dir / "emb" / "embedder.ckpt").string(), "--fusion", "concat", "--out", (dir / "s1").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "s1" / "best.ckpt"));
  const auto resolved = nlohmann::json::parse(std::ifstream(dir / "s1" / "run_config.json"));
  EXPECT_EQ(resolved["exformer"]["fusion"], "concat");
  EXPECT_EQ(resolved["seed"], 3);

  // Stage 2 with a different fusion than stage 1 is rejected.
  r = run_cli({"train-semi", "--config", cfg, "--corpus", data + "/manifest.jsonl", "--unlabeled",
               (dir / "unl" / "manifest.jsonl").string(), "--stage1", (dir / "s1").string(), "--out",
               (dir / "bad").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);

  r = run_cli({"train-semi", "--config", cfg, "--fusion", "concat", "--corpus", data + "/manifest.jsonl",
               "--unlabeled", (dir / "unl" / "manifest.jsonl").string(), "--stage1", (dir / "s1").string(),
               "--p", "0.1", "--out", (dir / "s2").string()});
  ASSERT_EQ(r.code, 0) << r.err;

  r = run_cli({"evaluate", "--ckpt", (dir / "s2").string(), "--test", data + "/test/mixtures.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_EQ(report["n_items"], 2);
  EXPECT_TRUE(report["mean_si_sdri"].is_number());

  const auto out_t = dir / "out" / "t.wav", out_r = dir / "out" / "r.wav";
  r = run_cli({"extract", "--ckpt", (dir / "s2" / "best.ckpt").string(), "--mixture",
               data + "/test/mix0000_mixture.wav", "--enroll", data + "/test/mix0000_enroll.wav",
               "--out-target", out_t.string(), "--out-residual", out_r.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto mix = load_wav(dir / "data" / "test" / "mix0000_mixture.wav");
  EXPECT_EQ(load_wav(out_t).size(), mix.size());
  EXPECT_EQ(load_wav(out_r).size(), mix.size());
}

}  // namespace
}  // namespace tse
