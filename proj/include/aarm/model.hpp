#pragma once

#include "aarm/common.hpp"
#include "aarm/corpus.hpp"

#include <optional>
#include <string>

namespace aarm {

enum class Variant {
  aarm,
  a_inter,
  no_aspect_att,
  a_static,
  no_user_att,
  global_only,
  aspect_only,
};

enum class EmbeddingStrategy {
  pretrain_transform,  // embeddings fixed, transform trainable (default)
  pretrain_tune,       // embeddings trainable, transform fixed to identity
  random_tune,         // random trainable embeddings, transform fixed
};

enum class MaskingMode {
  softmax_exclude,  // masked entries removed from softmax denominators
  literal,          // masked logits stay 0 inside the denominator
};

std::string to_string(Variant v);
std::string to_string(EmbeddingStrategy s);
std::string to_string(MaskingMode m);
Variant parse_variant(const std::string& s);
EmbeddingStrategy parse_strategy(const std::string& s);
MaskingMode parse_masking(const std::string& s);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  int aspect_dim = 128;
  int global_dim = 128;
  Variant variant = Variant::aarm;
  EmbeddingStrategy strategy = EmbeddingStrategy::pretrain_transform;
  MaskingMode masking = MaskingMode::softmax_exclude;
  double dropout = 0.5;

  bool uses_global_part() const { return variant != Variant::aspect_only; }
  bool uses_aspect_part() const { return variant != Variant::global_only; }
  int output_dim() const {
    return (uses_global_part() ? global_dim : 0) + (uses_aspect_part() ? aspect_dim : 0);
  }
};

struct ModelParams {
  ModelConfig config;
  Mat aspect_embeddings;  // (|A|+1) x d_a, row 0 (PAD) all-zero
  Mat transform;          // d_a x d_a
  Vec aspect_att;         // d_a, aspect-level attention weights
  Vec user_att;           // d_a, user-level attention weights
  Mat user_factors;       // |U| x d_g
  Mat item_factors;       // |V| x d_g
  Vec output_weights;     // output_dim()

  bool embeddings_trainable() const {
    return config.strategy != EmbeddingStrategy::pretrain_transform;
  }
  bool transform_trainable() const {
    return config.strategy == EmbeddingStrategy::pretrain_transform;
  }
  int user_count() const { return static_cast<int>(user_factors.rows()); }
  int item_count() const { return static_cast<int>(item_factors.rows()); }
  int vocab_size() const { return static_cast<int>(aspect_embeddings.rows()); }

  std::uint64_t content_hash() const;
};

// `pretrained` is required for the two pretrain strategies and ignored for
// random_tune. Initialization: transform = identity (+ small noise when
// trainable); attention/factor/output weights ~ U(-0.05, 0.05).
ModelParams init_params(const ModelConfig& config, int users, int items, int vocab_size,
                        const Mat* pretrained, std::uint64_t seed);

struct DropoutMask {
  bool active = false;
  double keep = 1.0;
  Vec global_mask;  // 0/1 entries; empty when the part is unused
  Vec aspect_mask;
};

struct ForwardTrace {
  std::vector<int> user_aspects;  // non-PAD vocab ids (intersection for a_inter)
  std::vector<int> item_aspects;
  int user_pads = 0;
  int item_pads = 0;
  Mat user_normed;   // rows c_i
  Mat item_normed;   // rows c_j
  Vec user_norms;    // pre-normalization Euclidean norms
  Vec item_norms;
  Mat aspect_att;    // n_u x n_v attention weights (empty when unused)
  Vec user_att;      // n_u attention weights (empty when unused)
  Mat pooled;        // n_u x d_a pooled interactions
  Vec context_sum;   // summed normalized embeddings feeding user attention
  Vec aspect_vec;    // aspect-part output (d_a)
  Vec global_vec;    // global-part output (d_g)
  DropoutMask mask;
  double value = 0.0;
};

// Normalized transformed embeddings for the whole vocabulary; valid only
// while the parameters it was built from stay unchanged.
struct NormedCache {
  Mat normed;  // vocab_size x d_a, PAD row zero
  Vec norms;   // -1 marks a degenerate row (error if ever gathered)
};

NormedCache build_normed_cache(const ModelParams& params);

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;                       // dropout draws in training mode
  const DropoutMask* fixed_mask = nullptr;  // replayed masks win over rng
  const NormedCache* cache = nullptr;       // inference-time lookup table
};

// Full scoring pass; config is passed separately so variant wrappers can
// override it without copying parameter matrices.
double forward(const ModelParams& params, const ModelConfig& config, const AspectSets& sets,
               int user, int item, const ForwardOptions& opt, ForwardTrace& trace);

inline double score(const ModelParams& params, const AspectSets& sets, int user, int item,
                    const ForwardOptions& opt, ForwardTrace& trace) {
  return forward(params, params.config, sets, user, item, opt, trace);
}

// Inference-mode score without a caller-held trace.
double score(const ModelParams& params, const AspectSets& sets, int user, int item);

// Unit-normalized transform of a raw embedding; errors when the transformed
// norm falls below 1e-12.
Vec transform_normalize(const Mat& transform, const Vec& raw);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);
void validate_against_bundle(const ModelParams& params, const DatasetBundle& bundle);

}  // namespace aarm
