#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "tse/manifest.hpp"
#include "tse/mixing.hpp"

namespace tse {

// Ranges the on-the-fly mixer samples from.
struct MixingConfig {
  double snr_min_db = 0.0;
  double snr_max_db = 5.0;
  double segment_seconds = 3.0;
  bool speed_perturb = true;
  double speed_min = 0.95;
  double speed_max = 1.05;
};

nlohmann::json to_json(const MixingConfig& cfg);
MixingConfig mixing_config_from_json(const nlohmann::json& j);

// Produces the index-th training item. Implementations derive all randomness
// from (seed, index), so the order or the number of workers asking for items
// never changes what an index yields.
class ItemSource {
 public:
  virtual ~ItemSource() = default;
  virtual TrainItem draw(std::uint64_t index) const = 0;
};

// Dynamic mixing over a speaker corpus: random target / interferer speakers,
// an enrollment utterance from the target speaker distinct from the source
// utterance when possible, speed perturbation of both sources, SNR uniform in
// [snr_min_db, snr_max_db]. `labeled` = false drops the references.
class MixingSource : public ItemSource {
 public:
  MixingSource(const Corpus& corpus, MixingConfig cfg, std::uint64_t seed, bool labeled = true);
  TrainItem draw(std::uint64_t index) const override;

 private:
  const Corpus* corpus_;
  std::vector<int> speakers_;
  MixingConfig cfg_;
  std::uint64_t seed_;
  bool labeled_;
};

// Cycles through a fixed list.
class FixedSource : public ItemSource {
 public:
  explicit FixedSource(std::vector<TrainItem> items);
  TrainItem draw(std::uint64_t index) const override;
  const std::vector<TrainItem>& items() const { return items_; }

 private:
  std::vector<TrainItem> items_;
};

// Materialises indices [first, first + count) of a source.
std::vector<TrainItem> draw_items(const ItemSource& source, std::uint64_t first, std::size_t count);

}  // namespace tse
