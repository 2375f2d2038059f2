#include "tse/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "tse/audio_io.hpp"
#include "tse/error.hpp"

namespace tse {

namespace {

using nlohmann::json;

std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::kMissingFile, "cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(Errc::kConfig, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void write_json_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::kIo, "cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

template <typename T>
T field(const json& row, const char* key, const std::filesystem::path& path) {
  if (!row.contains(key)) {
    fail(Errc::kConfig, path.string() + ": record missing field '" + key + "'");
  }
  try {
    return row.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(Errc::kConfig, path.string() + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  std::vector<UtteranceRecord> out;
  for (const auto& row : read_json_lines(path)) {
    out.push_back({field<std::string>(row, "utt_id", path),
                   field<int>(row, "speaker_id", path),
                   field<std::string>(row, "path", path),
                   field<double>(row, "duration_s", path)});
  }
  return out;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<UtteranceRecord>& records) {
  std::vector<json> rows;
  for (const auto& r : records) {
    rows.push_back({{"utt_id", r.utt_id},
                    {"speaker_id", r.speaker_id},
                    {"path", r.path},
                    {"duration_s", r.duration_s}});
  }
  write_json_lines(path, rows);
}

std::vector<MixtureRecord> read_mixture_list(const std::filesystem::path& path) {
  std::vector<MixtureRecord> out;
  for (const auto& row : read_json_lines(path)) {
    MixtureRecord r;
    r.mix_id = field<std::string>(row, "mix_id", path);
    r.mixture = field<std::string>(row, "mixture", path);
    r.enrollment = field<std::string>(row, "enrollment", path);
    r.target = row.value("target", "");
    r.residual = row.value("residual", "");
    out.push_back(std::move(r));
  }
  return out;
}

void write_mixture_list(const std::filesystem::path& path,
                        const std::vector<MixtureRecord>& records) {
  std::vector<json> rows;
  for (const auto& r : records) {
    json row = {{"mix_id", r.mix_id}, {"mixture", r.mixture}, {"enrollment", r.enrollment}};
    if (!r.target.empty()) row["target"] = r.target;
    if (!r.residual.empty()) row["residual"] = r.residual;
    rows.push_back(std::move(row));
  }
  write_json_lines(path, rows);
}

std::vector<int> Corpus::speakers() const {
  std::vector<int> ids;
  for (const auto& [id, utts] : by_speaker) ids.push_back(id);
  return ids;
}

std::size_t Corpus::n_utterances() const {
  std::size_t n = 0;
  for (const auto& [id, utts] : by_speaker) n += utts.size();
  return n;
}

Corpus load_corpus(const std::filesystem::path& manifest_path, int sample_rate) {
  const auto base = manifest_path.parent_path();
  Corpus corpus;
  for (const auto& rec : read_manifest(manifest_path)) {
    std::filesystem::path p(rec.path);
    if (p.is_relative()) p = base / p;
    corpus.by_speaker[rec.speaker_id].push_back(load_wav(p, sample_rate));
  }
  return corpus;
}

}  // namespace tse
