#pragma once

#include "aarm/model.hpp"

#include <vector>

namespace aarm {

// Pairwise ranking loss -log(sigmoid(pos - neg)), softplus-stabilized.
double bpr_loss(double pos_score, double neg_score);

// lambda * (mean squared element of user factors + item factors + output
// weights); exactly those three matrices.
double l2_penalty(const ModelParams& params, double lambda);

struct Triple {
  int user;
  int pos;
  int neg;
};

// One gradient array per trainable matrix; fixed matrices keep zero-sized
// entries.
struct GradientSet {
  Mat aspect_embeddings;
  Mat transform;
  Vec aspect_att;
  Vec user_att;
  Mat user_factors;
  Mat item_factors;
  Vec output_weights;

  static GradientSet zeros_like(const ModelParams& params);
  bool all_finite() const;
};

// Reverse pass of one scored example; accumulates d(loss)/d(params) given
// d(loss)/d(score).
void backward_score(const ModelParams& params, const ModelConfig& config, const AspectSets& sets,
                    int user, int item, const ForwardTrace& trace, double dscore,
                    GradientSet& grads);

// Dropout masks drawn per example forward (positive then negative), replayed
// by batch_loss for finite-difference checks.
struct TripleMasks {
  DropoutMask pos;
  DropoutMask neg;
};

// Mean BPR over the batch plus the L2 penalty; gradients accumulated into
// `grads` (zeroed first). In training mode dropout masks are drawn from
// `rng` and, when `masks_out` is non-null, recorded there.
double batch_gradients(const ModelParams& params, const AspectSets& sets,
                       const std::vector<Triple>& batch, double lambda, bool training, Rng* rng,
                       GradientSet& grads, std::vector<TripleMasks>* masks_out = nullptr,
                       int threads = 1);

// Loss only, replaying the given masks (empty => no dropout).
double batch_loss(const ModelParams& params, const AspectSets& sets,
                  const std::vector<Triple>& batch, double lambda,
                  const std::vector<TripleMasks>* masks = nullptr);

}  // namespace aarm
