#pragma once

#include "aarm/common.hpp"

#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace aarm {

enum class Split : std::uint8_t { train, test };

struct InteractionRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::vector<std::string> review_tokens;
  std::vector<std::string> aspects;
};

// Interaction records plus contiguous integer id maps. `split` is empty until
// split_train_test has run and is then parallel to `records`.
struct InteractionTable {
  std::vector<InteractionRecord> records;
  std::vector<Split> split;
  std::vector<std::string> users;  // index -> id
  std::vector<std::string> items;
  std::unordered_map<std::string, int> user_index;
  std::unordered_map<std::string, int> item_index;
  std::vector<int> record_user;  // per record, contiguous ids
  std::vector<int> record_item;

  int user_count() const { return static_cast<int>(users.size()); }
  int item_count() const { return static_cast<int>(items.size()); }
  bool has_split() const { return split.size() == records.size(); }
};

// Aspect strings with index 0 reserved for the PAD sentinel.
struct AspectVocabulary {
  std::vector<std::string> aspects;  // aspects[0] == "<PAD>"
  std::unordered_map<std::string, int> index;

  int size() const { return static_cast<int>(aspects.size()); }  // |A| + 1
  int aspect_count() const { return size() - 1; }
  // -1 when unknown
  int lookup(const std::string& a) const {
    auto it = index.find(a);
    return it == index.end() ? -1 : it->second;
  }
};

// tf/df statistics over the chosen review population (train-only by default).
struct CorpusStats {
  std::vector<std::unordered_map<int, int>> user_tf;  // per user: aspect -> count
  std::vector<long long> user_tf_total;
  std::vector<int> user_df;  // per aspect: #users mentioning it
  std::vector<std::unordered_map<int, int>> item_tf;
  std::vector<long long> item_tf_total;
  std::vector<int> item_df;
  int user_count = 0;
  int item_count = 0;
};

// Fixed-length, PAD-padded aspect index lists. mask[k] is implied by
// index != kPadIndex. Raw (untruncated) sets are kept for statistics.
struct AspectSets {
  int user_len = 0;  // M_u
  int item_len = 0;  // M_v
  std::vector<std::vector<int>> user_sets;  // |U| rows of length user_len
  std::vector<std::vector<int>> item_sets;
  std::vector<std::vector<int>> raw_user_sets;  // ascending vocab indices
  std::vector<std::vector<int>> raw_item_sets;
};

struct ValidationSet {
  std::vector<std::pair<int, int>> entries;  // (user, held-out train item)
};

InteractionTable load_interactions(const std::string& path);

// Per-user random split: train count = round(ratio * n_u), clamped to >= 1
// train and (when n_u >= 2) >= 1 test. Deterministic given seed.
void split_train_test(InteractionTable& table, double ratio, std::uint64_t seed);

// Distinct (user, item) pairs with at least one train record, as sorted
// per-user item lists. Ratings are discarded.
std::vector<std::vector<int>> binarize(const InteractionTable& table);

AspectVocabulary build_vocabulary(const InteractionTable& table, bool train_only = true);

CorpusStats compute_corpus_stats(const InteractionTable& table, const AspectVocabulary& vocab,
                                 bool train_only = true);

double tfidf_user(const CorpusStats& stats, int aspect, int user);
double tfidf_item(const CorpusStats& stats, int aspect, int item);

// Nearest-rank quantile: smallest value whose cumulative fraction >= q.
int nearest_rank_quantile(std::vector<int> sizes, double q);

AspectSets build_aspect_sets(const InteractionTable& table, const AspectVocabulary& vocab,
                             const CorpusStats& stats, double quantile = 0.75);

ValidationSet build_validation(const InteractionTable& table, int n_users, std::uint64_t seed);

// Everything downstream stages need, as produced by `prepare`.
struct DatasetBundle {
  std::vector<std::string> users;
  std::vector<std::string> items;
  AspectVocabulary vocab;
  AspectSets sets;
  ValidationSet validation;
  // per record: (user, item, split)
  std::vector<std::tuple<int, int, Split>> records;
  std::vector<std::string> corpus_lines;  // lowercased train-review tokens

  int user_count() const { return static_cast<int>(users.size()); }
  int item_count() const { return static_cast<int>(items.size()); }

  std::vector<std::vector<int>> train_positives() const;
  std::vector<std::vector<int>> test_positives() const;  // minus train positives
};

struct PrepareConfig {
  double ratio = 0.7;
  double quantile = 0.75;
  int validation_users = 1000;
  std::uint64_t seed = 1;
  bool aspects_from_train_only = true;
};

DatasetBundle prepare_dataset(const InteractionTable& table, const PrepareConfig& cfg);
DatasetBundle prepare_dataset(const std::string& jsonl_path, const PrepareConfig& cfg);

void save_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

}  // namespace aarm
