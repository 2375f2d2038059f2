#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tse/waveform.hpp"

namespace tse {

// One line of the corpus manifest (JSON lines).
struct UtteranceRecord {
  std::string utt_id;
  int speaker_id = 0;
  std::string path;
  double duration_s = 0.0;
};

// One line of a mixture list used for evaluation and extraction batches.
struct MixtureRecord {
  std::string mix_id;
  std::string mixture;
  std::string enrollment;
  std::string target;
  std::string residual;
};

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records);

std::vector<MixtureRecord> read_mixture_list(const std::filesystem::path& path);
void write_mixture_list(const std::filesystem::path& path,
                        const std::vector<MixtureRecord>& records);

// Utterances grouped by speaker, in manifest order.
struct Corpus {
  std::map<int, std::vector<Waveform>> by_speaker;

  std::vector<int> speakers() const;
  std::size_t n_utterances() const;
};

// Relative paths in the manifest resolve against the manifest's directory.
Corpus load_corpus(const std::filesystem::path& manifest_path,
                   int sample_rate = kDefaultSampleRate);

}  // namespace tse
