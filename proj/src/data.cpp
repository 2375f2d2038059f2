#include "tse/data.hpp"

#include <random>

#include "tse/error.hpp"
#include "tse/json_util.hpp"

namespace tse {

using nlohmann::json;

json to_json(const MixingConfig& cfg) {
  return {{"snr_min_db", cfg.snr_min_db},     {"snr_max_db", cfg.snr_max_db},
          {"segment_seconds", cfg.segment_seconds}, {"speed_perturb", cfg.speed_perturb},
          {"speed_min", cfg.speed_min},       {"speed_max", cfg.speed_max}};
}

MixingConfig mixing_config_from_json(const json& j) {
  MixingConfig cfg;
  ConfigReader(j, "mix")
      .get("snr_min_db", cfg.snr_min_db)
      .get("snr_max_db", cfg.snr_max_db)
      .get("segment_seconds", cfg.segment_seconds)
      .get("speed_perturb", cfg.speed_perturb)
      .get("speed_min", cfg.speed_min)
      .get("speed_max", cfg.speed_max)
      .finish();
  require(cfg.snr_min_db <= cfg.snr_max_db && cfg.speed_min <= cfg.speed_max &&
              cfg.segment_seconds > 0,
          Errc::kConfig, "mix ranges are inverted or empty");
  return cfg;
}

MixingSource::MixingSource(const Corpus& corpus, MixingConfig cfg, std::uint64_t seed, bool labeled)
    : corpus_(&corpus), speakers_(corpus.speakers()), cfg_(cfg), seed_(seed), labeled_(labeled) {
  require(speakers_.size() >= 2, Errc::kInsufficientData,
          "mixing needs at least two speakers in the corpus");
}

TrainItem MixingSource::draw(std::uint64_t index) const {
  std::seed_seq seq{static_cast<unsigned>(seed_), static_cast<unsigned>(seed_ >> 32),
                    static_cast<unsigned>(index), static_cast<unsigned>(index >> 32)};
  std::mt19937_64 rng(seq);
  auto pick = [&rng](std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };

  const std::size_t t_idx = pick(speakers_.size());
  std::size_t i_idx = pick(speakers_.size() - 1);
  if (i_idx >= t_idx) ++i_idx;
  const auto& target_utts = corpus_->by_speaker.at(speakers_[t_idx]);
  const auto& interf_utts = corpus_->by_speaker.at(speakers_[i_idx]);

  const std::size_t src = pick(target_utts.size());
  std::size_t enroll = src;
  if (target_utts.size() > 1) {
    enroll = pick(target_utts.size() - 1);
    if (enroll >= src) ++enroll;
  }
  const Waveform& interf = interf_utts[pick(interf_utts.size())];

  Waveform a = target_utts[src];
  Waveform b = interf;
  if (cfg_.speed_perturb) {
    std::uniform_real_distribution<double> speed(cfg_.speed_min, cfg_.speed_max);
    const SpeedRange range{cfg_.speed_min, cfg_.speed_max};
    a = speed_perturb(a, speed(rng), range);
    b = speed_perturb(b, speed(rng), range);
  }
  MixSpec spec;
  spec.snr_db = std::uniform_real_distribution<double>(cfg_.snr_min_db, cfg_.snr_max_db)(rng);
  spec.segment_seconds = cfg_.segment_seconds;
  spec.seed = rng();
  MixResult mix = dynamic_mix(a, b, spec);
  if (!labeled_) return TrainItem::make_unlabeled(std::move(mix.mixture), target_utts[enroll]);
  return TrainItem::make_labeled(std::move(mix.mixture), std::move(mix.target),
                                 std::move(mix.residual), target_utts[enroll]);
}

FixedSource::FixedSource(std::vector<TrainItem> items) : items_(std::move(items)) {
  require(!items_.empty(), Errc::kInsufficientData, "fixed item list is empty");
}

TrainItem FixedSource::draw(std::uint64_t index) const {
  return items_[index % items_.size()];
}

std::vector<TrainItem> draw_items(const ItemSource& source, std::uint64_t first, std::size_t count) {
  std::vector<TrainItem> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(source.draw(first + i));
  return out;
}

}  // namespace tse
