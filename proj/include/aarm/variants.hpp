#pragma once

#include "aarm/model.hpp"

#include <vector>

namespace aarm {

// Structural description of each forward assembly; everything else (corpus,
// training, evaluation) is shared by construction.
struct VariantInfo {
  Variant tag;
  const char* name;
  bool uses_global_part;
  bool uses_aspect_part;
  bool uses_aspect_attention;
  bool uses_user_attention;
};

const std::vector<VariantInfo>& variant_registry();
const VariantInfo& variant_info(Variant tag);

// Aspect-part output under a forced variant; the parameter struct itself is
// untouched. Valid for the dual-part variants only.
Vec aspect_part_output(const ModelParams& params, const AspectSets& sets, int user, int item,
                       Variant variant);

inline Vec forward_a_inter(const ModelParams& p, const AspectSets& s, int u, int v) {
  return aspect_part_output(p, s, u, v, Variant::a_inter);
}
inline Vec forward_no_aspect_att(const ModelParams& p, const AspectSets& s, int u, int v) {
  return aspect_part_output(p, s, u, v, Variant::no_aspect_att);
}
inline Vec forward_a_static(const ModelParams& p, const AspectSets& s, int u, int v) {
  return aspect_part_output(p, s, u, v, Variant::a_static);
}
inline Vec forward_no_user_att(const ModelParams& p, const AspectSets& s, int u, int v) {
  return aspect_part_output(p, s, u, v, Variant::no_user_att);
}

// Single-part scores; the params must have been built for that variant.
double forward_global_only(const ModelParams& params, const AspectSets& sets, int user, int item);
double forward_aspect_only(const ModelParams& params, const AspectSets& sets, int user, int item);

// Re-points the embedding machinery of an existing parameter set:
//   pretrain_transform: fixed pre-trained embeddings, trainable transform
//   pretrain_tune:      trainable pre-trained embeddings, identity transform
//   random_tune:        trainable random embeddings, identity transform
void apply_embedding_strategy(ModelParams& params, EmbeddingStrategy strategy,
                              const Mat* pretrained, std::uint64_t seed);

}  // namespace aarm
