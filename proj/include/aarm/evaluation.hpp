#pragma once

#include "aarm/corpus.hpp"
#include "aarm/model.hpp"

#include <functional>
#include <vector>

namespace aarm {

struct UserMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
  int hit = 0;
};

// Metrics of one ranked list against a sorted ground-truth set, cutoff n.
UserMetrics list_metrics(const std::vector<int>& ranked, const std::vector<int>& truth, int n);

struct EvalReport {
  int top_n = 10;
  std::vector<int> user_ids;  // users with non-empty ground truth
  std::vector<UserMetrics> per_user;
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
  double hit_ratio = 0.0;

  int user_count() const { return static_cast<int>(user_ids.size()); }
};

// Read-only checkpoint scorer with the per-vocabulary normalization cache.
class Scorer {
 public:
  Scorer(const ModelParams& params, const AspectSets& sets);
  double operator()(int user, int item) const;

 private:
  const ModelParams& params_;
  const AspectSets& sets_;
  NormedCache cache_;
};

using ScoreFn = std::function<double(int user, int item)>;
using ItemScoreFn = std::function<double(int item)>;

// All items except `exclude` (sorted), ranked score-descending with ties by
// ascending item index, truncated at n.
std::vector<int> rank_candidates(const ItemScoreFn& score, int item_count,
                                 const std::vector<int>& exclude, int n);

std::vector<int> recommend_top_n(const Scorer& scorer, int item_count,
                                 const std::vector<int>& train_positives, int user, int n);

// Test-split protocol: candidates are every item outside the user's train
// positives; users with empty ground truth are excluded from all averages.
EvalReport evaluate(const ModelParams& params, const DatasetBundle& bundle, int n = 10,
                    int threads = 1);

// Validation protocol: one held-out train item per sampled user.
EvalReport evaluate_validation(const ModelParams& params, const DatasetBundle& bundle, int n = 10,
                               int threads = 1);

// Shared reducer used by both protocols (and by scorer-stub tests).
EvalReport evaluate_with(const ScoreFn& score, int item_count,
                         const std::vector<std::vector<int>>& exclude_per_user,
                         const std::vector<std::vector<int>>& truth_per_user,
                         const std::vector<int>& users, int n, int threads = 1);

double round_percent(double fraction);  // 100x, rounded to 3 decimals

}  // namespace aarm
