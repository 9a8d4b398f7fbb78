#pragma once

#include "aarm/corpus.hpp"
#include "aarm/gradients.hpp"
#include "aarm/model.hpp"

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace aarm {

struct TrainConfig {
  double learning_rate = 0.003;
  double lambda = 0.0001;  // L2 coefficient
  int batch_size = 512;
  int max_epochs = 300;
  int eval_every = 10;          // epochs between validation checkpoints
  int patience_checkpoints = 4; // 40 epochs at the default cadence
  int stall_measures = 2;       // how many of the 4 measures must stall
  int top_n = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct AdamState {
  GradientSet m;
  GradientSet v;
  long long step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

// Bias-corrected Adam update over the trainable matrices only.
void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Uniform draws over the items a user never trained on.
class NegativeSampler {
 public:
  NegativeSampler(const std::vector<std::vector<int>>& train_positives, int item_count);
  int sample(int user, Rng& rng) const;

 private:
  const std::vector<std::vector<int>>& positives_;
  int item_count_;
};

struct CheckpointMetrics {
  int epoch = 0;
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;
  double hit_ratio = 0.0;
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // one entry per completed epoch
  std::vector<CheckpointMetrics> checkpoints;
  int stopping_epoch = 0;
  int best_checkpoint_epoch = -1;  // best validation NDCG
};

// Stops once `stall_measures` of the four measures have failed to exceed
// their best for `patience` consecutive checkpoints. Pure metric bookkeeping.
class EarlyStopper {
 public:
  EarlyStopper(int patience, int stall_measures);
  bool observe(const std::array<double, 4>& measures);

  const std::array<double, 4>& best() const { return best_; }
  const std::array<int, 4>& stalled() const { return stalled_; }
  void restore(const std::array<double, 4>& best, const std::array<int, 4>& stalled);

 private:
  int patience_;
  int stall_measures_;
  std::array<double, 4> best_;
  std::array<int, 4> stalled_;
};

struct TrainResult {
  ModelParams best;
  TrainHistory history;
};

using TrainLogger = std::function<void(const std::string& json_line)>;

// Epoch loop over shuffled train positives with fresh negatives, validation
// checkpoints every eval_every epochs, early stopping, best-NDCG selection.
// When `state_path` is set the full optimizer state is checkpointed there
// and `resume` continues an interrupted run identically.
TrainResult train(const DatasetBundle& bundle, ModelParams params, const TrainConfig& cfg,
                  const std::string& state_path = "", bool resume = false,
                  const TrainLogger& logger = nullptr);

}  // namespace aarm
