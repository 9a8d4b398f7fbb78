#include "aarm/model.hpp"

#include <algorithm>
#include <cmath>

namespace aarm {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::aarm: return "aarm";
    case Variant::a_inter: return "a_inter";
    case Variant::no_aspect_att: return "no_aspect_att";
    case Variant::a_static: return "a_static";
    case Variant::no_user_att: return "no_user_att";
    case Variant::global_only: return "global_only";
    case Variant::aspect_only: return "aspect_only";
  }
  fail("bad variant enum");
}

std::string to_string(EmbeddingStrategy s) {
  switch (s) {
    case EmbeddingStrategy::pretrain_transform: return "pretrain_transform";
    case EmbeddingStrategy::pretrain_tune: return "pretrain_tune";
    case EmbeddingStrategy::random_tune: return "random_tune";
  }
  fail("bad strategy enum");
}

std::string to_string(MaskingMode m) {
  return m == MaskingMode::softmax_exclude ? "softmax_exclude" : "literal";
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {
      Variant::aarm,        Variant::a_inter,     Variant::no_aspect_att, Variant::a_static,
      Variant::no_user_att, Variant::global_only, Variant::aspect_only,
  };
  return v;
}

Variant parse_variant(const std::string& s) {
  for (Variant v : all_variants())
    if (to_string(v) == s) return v;
  fail("unknown variant: " + s);
}

EmbeddingStrategy parse_strategy(const std::string& s) {
  for (auto e : {EmbeddingStrategy::pretrain_transform, EmbeddingStrategy::pretrain_tune,
                 EmbeddingStrategy::random_tune})
    if (to_string(e) == s) return e;
  fail("unknown embedding strategy: " + s);
}

MaskingMode parse_masking(const std::string& s) {
  if (s == "softmax_exclude") return MaskingMode::softmax_exclude;
  if (s == "literal") return MaskingMode::literal;
  fail("unknown masking mode: " + s);
}

std::uint64_t ModelParams::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const double* p, Eigen::Index n) { h = fnv1a(p, sizeof(double) * n, h); };
  mix(aspect_embeddings.data(), aspect_embeddings.size());
  mix(transform.data(), transform.size());
  mix(aspect_att.data(), aspect_att.size());
  mix(user_att.data(), user_att.size());
  mix(user_factors.data(), user_factors.size());
  mix(item_factors.data(), item_factors.size());
  mix(output_weights.data(), output_weights.size());
  return h;
}

ModelParams init_params(const ModelConfig& config, int users, int items, int vocab_size,
                        const Mat* pretrained, std::uint64_t seed) {
  require(config.aspect_dim >= 1 && config.global_dim >= 1, "embedding dims must be >= 1");
  require(config.dropout >= 0.0 && config.dropout < 1.0, "dropout rate must be in [0,1)");

  ModelParams p;
  p.config = config;
  const int d_a = config.aspect_dim;

  Rng rng(derive_seed(seed, 0x1417a3a5u));
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  auto fill = [&](auto&& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = small(rng);
  };

  if (config.strategy == EmbeddingStrategy::random_tune) {
    p.aspect_embeddings = Mat::Zero(vocab_size, d_a);
    for (int a = 1; a < vocab_size; ++a)
      for (int d = 0; d < d_a; ++d) p.aspect_embeddings(a, d) = small(rng);
  } else {
    require(pretrained != nullptr, "strategy " + to_string(config.strategy) +
                                       " requires pre-trained aspect embeddings");
    require(pretrained->rows() == vocab_size && pretrained->cols() == d_a,
            "pre-trained embedding matrix shape mismatch");
    p.aspect_embeddings = *pretrained;
    p.aspect_embeddings.row(kPadIndex).setZero();
  }

  p.transform = Mat::Identity(d_a, d_a);
  if (config.strategy == EmbeddingStrategy::pretrain_transform) {
    // identity bias keeps pre-trained similarity intact at step 0
    std::uniform_real_distribution<double> tiny(-0.01, 0.01);
    for (int i = 0; i < d_a; ++i)
      for (int j = 0; j < d_a; ++j) p.transform(i, j) += tiny(rng);
  }

  p.aspect_att.resize(d_a);
  p.user_att.resize(d_a);
  fill(p.aspect_att);
  fill(p.user_att);
  p.user_factors.resize(users, config.global_dim);
  p.item_factors.resize(items, config.global_dim);
  fill(p.user_factors);
  fill(p.item_factors);
  p.output_weights.resize(config.output_dim());
  fill(p.output_weights);
  return p;
}

Vec transform_normalize(const Mat& transform, const Vec& raw) {
  Vec z = transform * raw;
  const double n = z.norm();
  require(n > 1e-12, "degenerate transformed aspect embedding (norm " + format_double(n) + ")");
  return z / n;
}

namespace {

void gather_non_pad(const std::vector<int>& row, std::vector<int>& out, int& pads) {
  out.clear();
  pads = 0;
  for (int idx : row) {
    if (idx == kPadIndex)
      ++pads;
    else
      out.push_back(idx);
  }
}

void transform_rows(const ModelParams& params, const NormedCache* cache,
                    const std::vector<int>& ids, Mat& normed, Vec& norms) {
  const int d = params.config.aspect_dim;
  normed.resize(static_cast<Eigen::Index>(ids.size()), d);
  norms.resize(static_cast<Eigen::Index>(ids.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (cache != nullptr) {
      require(cache->norms(ids[i]) > 0, "degenerate transformed aspect embedding (aspect index " +
                                            std::to_string(ids[i]) + ")");
      normed.row(i) = cache->normed.row(ids[i]);
      norms(static_cast<Eigen::Index>(i)) = cache->norms(ids[i]);
      continue;
    }
    Vec z = params.transform * params.aspect_embeddings.row(ids[i]).transpose();
    const double n = z.norm();
    require(n > 1e-12, "degenerate transformed aspect embedding (aspect index " +
                           std::to_string(ids[i]) + ", norm " + format_double(n) + ")");
    normed.row(i) = z.transpose() / n;
    norms(static_cast<Eigen::Index>(i)) = n;
  }
}

// Softmax over the explicit logits; in literal mode `pad_count` masked
// entries contribute exp(0) to the denominator.
Vec masked_softmax(const Vec& logits, int pad_count, MaskingMode mode) {
  if (logits.size() == 0) return Vec();
  double m = logits.maxCoeff();
  if (mode == MaskingMode::literal && pad_count > 0) m = std::max(m, 0.0);
  Vec w = (logits.array() - m).exp();
  double denom = w.sum();
  if (mode == MaskingMode::literal) denom += static_cast<double>(pad_count) * std::exp(-m);
  return w / denom;
}

void aspect_part(const ModelParams& params, const ModelConfig& config, const AspectSets& sets,
                 int user, int item, const NormedCache* cache, ForwardTrace& t) {
  const int d = config.aspect_dim;
  gather_non_pad(sets.user_sets[user], t.user_aspects, t.user_pads);
  gather_non_pad(sets.item_sets[item], t.item_aspects, t.item_pads);

  if (config.variant == Variant::a_inter) {
    // interactions restricted to aspects present on both sides; the
    // user-level softmax cancels against identical pooled rows, leaving
    // the plain sum of squared shared embeddings
    std::vector<int> u_sorted = t.user_aspects, v_sorted = t.item_aspects;
    std::sort(u_sorted.begin(), u_sorted.end());
    std::sort(v_sorted.begin(), v_sorted.end());
    std::vector<int> shared;
    std::set_intersection(u_sorted.begin(), u_sorted.end(), v_sorted.begin(), v_sorted.end(),
                          std::back_inserter(shared));
    t.user_aspects = shared;
    t.item_aspects = shared;
    transform_rows(params, cache, shared, t.user_normed, t.user_norms);
    t.item_normed = t.user_normed;
    t.item_norms = t.user_norms;

    const auto n = static_cast<Eigen::Index>(shared.size());
    t.pooled.resize(n, d);
    t.aspect_vec = Vec::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      t.pooled.row(i) = t.user_normed.row(i).cwiseProduct(t.user_normed.row(i));
      t.aspect_vec += t.pooled.row(i).transpose();
    }
    t.context_sum = n > 0 ? Vec(t.user_normed.colwise().sum().transpose()) : Vec::Zero(d);
    return;
  }

  transform_rows(params, cache, t.user_aspects, t.user_normed, t.user_norms);
  transform_rows(params, cache, t.item_aspects, t.item_normed, t.item_norms);
  const auto n_u = static_cast<Eigen::Index>(t.user_aspects.size());
  const auto n_v = static_cast<Eigen::Index>(t.item_aspects.size());

  t.pooled = Mat::Zero(n_u, d);
  const bool use_aspect_att = config.variant != Variant::no_aspect_att;
  if (use_aspect_att) {
    t.aspect_att.resize(n_u, n_v);
    for (Eigen::Index i = 0; i < n_u; ++i) {
      Vec logits(n_v);
      for (Eigen::Index j = 0; j < n_v; ++j)
        logits(j) = params.aspect_att.dot(
            t.user_normed.row(i).cwiseProduct(t.item_normed.row(j)).transpose());
      Vec w = masked_softmax(logits, t.item_pads, config.masking);
      if (w.size() > 0) t.aspect_att.row(i) = w.transpose();
      for (Eigen::Index j = 0; j < n_v; ++j)
        t.pooled.row(i) += w(j) * t.user_normed.row(i).cwiseProduct(t.item_normed.row(j));
    }
  } else {
    for (Eigen::Index i = 0; i < n_u; ++i)
      for (Eigen::Index j = 0; j < n_v; ++j)
        t.pooled.row(i) += t.user_normed.row(i).cwiseProduct(t.item_normed.row(j));
  }

  const Mat& context = config.variant == Variant::a_static ? t.user_normed : t.item_normed;
  t.context_sum = context.rows() > 0 ? Vec(context.colwise().sum().transpose()) : Vec::Zero(d);

  t.aspect_vec = Vec::Zero(d);
  if (config.variant == Variant::no_user_att) {
    for (Eigen::Index i = 0; i < n_u; ++i) t.aspect_vec += t.pooled.row(i).transpose();
  } else {
    if (n_u > 0) {
      Vec logits(n_u);
      for (Eigen::Index i = 0; i < n_u; ++i)
        logits(i) = params.user_att.dot(t.context_sum.cwiseProduct(t.user_normed.row(i).transpose()));
      t.user_att = masked_softmax(logits, t.user_pads, config.masking);
      for (Eigen::Index i = 0; i < n_u; ++i)
        t.aspect_vec += t.user_att(i) * t.pooled.row(i).transpose();
    }
  }
}

Vec draw_mask(Rng& rng, Eigen::Index n, double keep) {
  Vec m(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) m(i) = unit(rng) < keep ? 1.0 : 0.0;
  return m;
}

}  // namespace

double forward(const ModelParams& params, const ModelConfig& config, const AspectSets& sets,
               int user, int item, const ForwardOptions& opt, ForwardTrace& trace) {
  require(user >= 0 && user < static_cast<int>(sets.user_sets.size()),
          "unknown user index " + std::to_string(user));
  require(item >= 0 && item < static_cast<int>(sets.item_sets.size()),
          "unknown item index " + std::to_string(item));

  trace = ForwardTrace{};
  if (config.uses_aspect_part()) {
    aspect_part(params, config, sets, user, item, opt.cache, trace);
  }
  if (config.uses_global_part()) {
    require(user < params.user_count() && item < params.item_count(),
            "user/item index outside parameter tables");
    trace.global_vec = params.user_factors.row(user).cwiseProduct(params.item_factors.row(item))
                           .transpose();
  }

  // inverted dropout on each surviving part, drawn global-part-first
  trace.mask.active = opt.training && config.dropout > 0.0;
  trace.mask.keep = 1.0 - config.dropout;
  Vec global_out = trace.global_vec;
  Vec aspect_out = trace.aspect_vec;
  if (trace.mask.active) {
    if (opt.fixed_mask != nullptr) {
      trace.mask = *opt.fixed_mask;
    } else {
      require(opt.rng != nullptr, "training-mode forward needs an rng or fixed dropout mask");
      if (config.uses_global_part())
        trace.mask.global_mask = draw_mask(*opt.rng, config.global_dim, trace.mask.keep);
      if (config.uses_aspect_part())
        trace.mask.aspect_mask = draw_mask(*opt.rng, config.aspect_dim, trace.mask.keep);
    }
    if (config.uses_global_part())
      global_out = global_out.cwiseProduct(trace.mask.global_mask) / trace.mask.keep;
    if (config.uses_aspect_part())
      aspect_out = aspect_out.cwiseProduct(trace.mask.aspect_mask) / trace.mask.keep;
  }

  require(params.output_weights.size() == config.output_dim(),
          "output weights sized for a different variant");
  double value = 0.0;
  Eigen::Index off = 0;
  if (config.uses_global_part()) {
    value += params.output_weights.segment(off, config.global_dim).dot(global_out);
    off += config.global_dim;
  }
  if (config.uses_aspect_part())
    value += params.output_weights.segment(off, config.aspect_dim).dot(aspect_out);
  trace.value = value;
  return value;
}

double score(const ModelParams& params, const AspectSets& sets, int user, int item) {
  ForwardTrace trace;
  return forward(params, params.config, sets, user, item, ForwardOptions{}, trace);
}

NormedCache build_normed_cache(const ModelParams& params) {
  const int n = params.vocab_size();
  const int d = params.config.aspect_dim;
  NormedCache cache;
  cache.normed = Mat::Zero(n, d);
  cache.norms = Vec::Zero(n);
  for (int a = 1; a < n; ++a) {
    Vec z = params.transform * params.aspect_embeddings.row(a).transpose();
    const double norm = z.norm();
    if (norm > 1e-12) {
      cache.normed.row(a) = z.transpose() / norm;
      cache.norms(a) = norm;
    } else {
      cache.norms(a) = -1.0;
    }
  }
  return cache;
}

}  // namespace aarm
