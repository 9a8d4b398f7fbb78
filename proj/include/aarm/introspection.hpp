#pragma once

#include "aarm/corpus.hpp"
#include "aarm/model.hpp"

#include <json.hpp>

#include <array>
#include <string>
#include <vector>

namespace aarm {

struct AttentionDump {
  std::string user_id;
  std::string item_id;
  std::vector<std::string> user_aspects;  // PAD omitted
  std::vector<std::string> item_aspects;
  std::vector<bool> shared;  // per user aspect: also in the item's set
  Vec user_att;              // alpha; empty when the variant has none
  Mat aspect_att;            // beta; rows = user aspects, cols = item aspects
};

// Pure read of a checkpoint: inference forward for (user, item), labeled.
AttentionDump attention_trace(const ModelParams& params, const DatasetBundle& bundle,
                              const std::string& user_id, const std::string& item_id);

// JSON with 6-decimal floats; alpha additionally carries a 4-decimal display
// string. CSV lays beta out as a heatmap table.
nlohmann::json dump_to_json(const AttentionDump& dump);
std::string dump_to_csv(const AttentionDump& dump);

struct SharedAspectHistogram {
  std::array<long long, 7> counts{};  // shared-aspect buckets 0,1,2,3,4,5,>5
  std::array<double, 7> ratios{};
  long long pairs = 0;
  bool sampled = false;
  long long sample_size = 0;
};

// Histogram of |A_u intersect A_v| over user x item pairs. sample_size 0
// picks exact traversal for small tables and 10^6 samples otherwise; -1
// forces exact; > 0 samples that many pairs with replacement.
SharedAspectHistogram shared_aspect_distribution(const DatasetBundle& bundle, bool truncated,
                                                 long long sample_size, std::uint64_t seed);

nlohmann::json histogram_to_json(const SharedAspectHistogram& hist);

}  // namespace aarm
