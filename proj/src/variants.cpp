#include "aarm/variants.hpp"

namespace aarm {

const std::vector<VariantInfo>& variant_registry() {
  static const std::vector<VariantInfo> registry = {
      {Variant::aarm, "aarm", true, true, true, true},
      {Variant::a_inter, "a_inter", true, true, false, false},
      {Variant::no_aspect_att, "no_aspect_att", true, true, false, true},
      {Variant::a_static, "a_static", true, true, true, true},
      {Variant::no_user_att, "no_user_att", true, true, true, false},
      {Variant::global_only, "global_only", true, false, false, false},
      {Variant::aspect_only, "aspect_only", false, true, true, true},
  };
  return registry;
}

const VariantInfo& variant_info(Variant tag) {
  for (const auto& info : variant_registry())
    if (info.tag == tag) return info;
  fail("variant missing from registry");
}

Vec aspect_part_output(const ModelParams& params, const AspectSets& sets, int user, int item,
                       Variant variant) {
  ModelConfig cfg = params.config;
  cfg.variant = variant;
  require(cfg.uses_aspect_part() && cfg.uses_global_part(),
          "aspect_part_output expects a dual-part variant");
  ForwardTrace trace;
  forward(params, cfg, sets, user, item, ForwardOptions{}, trace);
  return trace.aspect_vec;
}

double forward_global_only(const ModelParams& params, const AspectSets& sets, int user, int item) {
  require(params.config.variant == Variant::global_only,
          "params were not built for the global_only variant");
  return score(params, sets, user, item);
}

double forward_aspect_only(const ModelParams& params, const AspectSets& sets, int user, int item) {
  require(params.config.variant == Variant::aspect_only,
          "params were not built for the aspect_only variant");
  return score(params, sets, user, item);
}

void apply_embedding_strategy(ModelParams& params, EmbeddingStrategy strategy,
                              const Mat* pretrained, std::uint64_t seed) {
  const int d = params.config.aspect_dim;
  params.config.strategy = strategy;

  if (strategy == EmbeddingStrategy::random_tune) {
    Rng rng(derive_seed(seed, 0xa59ec7u));
    std::uniform_real_distribution<double> small(-0.05, 0.05);
    params.aspect_embeddings = Mat::Zero(params.vocab_size(), d);
    for (int a = 1; a < params.vocab_size(); ++a)
      for (int k = 0; k < d; ++k) params.aspect_embeddings(a, k) = small(rng);
    params.transform = Mat::Identity(d, d);
    return;
  }

  require(pretrained != nullptr,
          to_string(strategy) + " requires pre-trained aspect embeddings");
  require(pretrained->rows() == params.vocab_size() && pretrained->cols() == d,
          "pre-trained embedding matrix shape mismatch");
  params.aspect_embeddings = *pretrained;
  params.aspect_embeddings.row(kPadIndex).setZero();

  if (strategy == EmbeddingStrategy::pretrain_transform) {
    Rng rng(derive_seed(seed, 0x7ca45u));
    std::uniform_real_distribution<double> tiny(-0.01, 0.01);
    params.transform = Mat::Identity(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) params.transform(i, j) += tiny(rng);
  } else {
    params.transform = Mat::Identity(d, d);
  }
}

}  // namespace aarm
