#include "aarm/gradients.hpp"

#include <cmath>
#include <thread>

namespace aarm {

double bpr_loss(double pos_score, double neg_score) {
  return softplus(-(pos_score - neg_score));
}

double l2_penalty(const ModelParams& params, double lambda) {
  if (lambda == 0.0) return 0.0;
  auto mean_sq = [](const auto& m) {
    return m.size() == 0 ? 0.0 : m.squaredNorm() / static_cast<double>(m.size());
  };
  return lambda * (mean_sq(params.user_factors) + mean_sq(params.item_factors) +
                   mean_sq(params.output_weights));
}

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  GradientSet g;
  if (p.embeddings_trainable())
    g.aspect_embeddings = Mat::Zero(p.aspect_embeddings.rows(), p.aspect_embeddings.cols());
  if (p.transform_trainable()) g.transform = Mat::Zero(p.transform.rows(), p.transform.cols());
  g.aspect_att = Vec::Zero(p.aspect_att.size());
  g.user_att = Vec::Zero(p.user_att.size());
  g.user_factors = Mat::Zero(p.user_factors.rows(), p.user_factors.cols());
  g.item_factors = Mat::Zero(p.item_factors.rows(), p.item_factors.cols());
  g.output_weights = Vec::Zero(p.output_weights.size());
  return g;
}

bool GradientSet::all_finite() const {
  return aspect_embeddings.allFinite() && transform.allFinite() && aspect_att.allFinite() &&
         user_att.allFinite() && user_factors.allFinite() && item_factors.allFinite() &&
         output_weights.allFinite();
}

namespace {

// c = z/||z|| backward: dz = (dc - c (c . dc)) / ||z||, then into the
// transform and (when tuned) the embedding row.
void normalization_backward(const ModelParams& params, const std::vector<int>& ids,
                            const Mat& normed, const Vec& norms, const Mat& d_normed,
                            GradientSet& grads) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Vec c = normed.row(r).transpose();
    Vec dc = d_normed.row(r).transpose();
    Vec dz = (dc - c * c.dot(dc)) / norms(r);
    if (params.transform_trainable())
      grads.transform += dz * params.aspect_embeddings.row(ids[i]);
    if (params.embeddings_trainable())
      grads.aspect_embeddings.row(ids[i]) += (params.transform.transpose() * dz).transpose();
  }
}

void aspect_part_backward(const ModelParams& params, const ModelConfig& config,
                          const ForwardTrace& t, const Vec& d_aspect_vec, GradientSet& grads) {
  const int d = config.aspect_dim;
  const auto n_u = static_cast<Eigen::Index>(t.user_aspects.size());
  const auto n_v = static_cast<Eigen::Index>(t.item_aspects.size());

  if (config.variant == Variant::a_inter) {
    // y_A = sum_i c_i . c_i over shared aspects; attention cancels out
    Mat d_normed = Mat::Zero(n_u, d);
    for (Eigen::Index i = 0; i < n_u; ++i)
      d_normed.row(i) = 2.0 * d_aspect_vec.cwiseProduct(t.user_normed.row(i).transpose()).transpose();
    normalization_backward(params, t.user_aspects, t.user_normed, t.user_norms, d_normed, grads);
    return;
  }

  Mat d_user_normed = Mat::Zero(n_u, d);
  Mat d_item_normed = Mat::Zero(n_v, d);

  // user-level pooling: y_A = sum_i alpha_i h_i (or plain sum)
  Mat d_pooled(n_u, d);
  if (config.variant == Variant::no_user_att) {
    for (Eigen::Index i = 0; i < n_u; ++i) d_pooled.row(i) = d_aspect_vec.transpose();
  } else if (n_u > 0) {
    Vec d_alpha(n_u);
    for (Eigen::Index i = 0; i < n_u; ++i) {
      d_alpha(i) = d_aspect_vec.dot(t.pooled.row(i).transpose());
      d_pooled.row(i) = t.user_att(i) * d_aspect_vec.transpose();
    }
    const double s = t.user_att.dot(d_alpha);
    Vec d_logit = t.user_att.cwiseProduct((d_alpha.array() - s).matrix());
    Vec d_context = Vec::Zero(d);
    for (Eigen::Index i = 0; i < n_u; ++i) {
      Vec c_i = t.user_normed.row(i).transpose();
      grads.user_att += d_logit(i) * t.context_sum.cwiseProduct(c_i);
      d_context += d_logit(i) * params.user_att.cwiseProduct(c_i);
      d_user_normed.row(i) += d_logit(i) * params.user_att.cwiseProduct(t.context_sum).transpose();
    }
    // context_sum runs over the item side, or the user side for a_static
    if (config.variant == Variant::a_static) {
      for (Eigen::Index i = 0; i < n_u; ++i) d_user_normed.row(i) += d_context.transpose();
    } else {
      for (Eigen::Index j = 0; j < n_v; ++j) d_item_normed.row(j) += d_context.transpose();
    }
  }

  // aspect-level pooling: h_i = sum_j beta_ij (c_i . c_j) (or unweighted)
  const bool use_aspect_att = config.variant != Variant::no_aspect_att;
  for (Eigen::Index i = 0; i < n_u; ++i) {
    const Vec dh = d_pooled.row(i).transpose();
    const Vec c_i = t.user_normed.row(i).transpose();
    if (use_aspect_att && n_v > 0) {
      Vec d_beta(n_v);
      for (Eigen::Index j = 0; j < n_v; ++j)
        d_beta(j) = dh.dot(c_i.cwiseProduct(t.item_normed.row(j).transpose()));
      const Vec beta = t.aspect_att.row(i).transpose();
      const double s = beta.dot(d_beta);
      const Vec d_logit = beta.cwiseProduct((d_beta.array() - s).matrix());
      for (Eigen::Index j = 0; j < n_v; ++j) {
        const Vec c_j = t.item_normed.row(j).transpose();
        const Vec interaction = c_i.cwiseProduct(c_j);
        grads.aspect_att += d_logit(j) * interaction;
        const Vec d_interaction = beta(j) * dh + d_logit(j) * params.aspect_att;
        d_user_normed.row(i) += d_interaction.cwiseProduct(c_j).transpose();
        d_item_normed.row(j) += d_interaction.cwiseProduct(c_i).transpose();
      }
    } else if (!use_aspect_att) {
      for (Eigen::Index j = 0; j < n_v; ++j) {
        const Vec c_j = t.item_normed.row(j).transpose();
        d_user_normed.row(i) += dh.cwiseProduct(c_j).transpose();
        d_item_normed.row(j) += dh.cwiseProduct(c_i).transpose();
      }
    }
  }

  normalization_backward(params, t.user_aspects, t.user_normed, t.user_norms, d_user_normed, grads);
  normalization_backward(params, t.item_aspects, t.item_normed, t.item_norms, d_item_normed, grads);
}

}  // namespace

void backward_score(const ModelParams& params, const ModelConfig& config, const AspectSets& sets,
                    int user, int item, const ForwardTrace& t, double dscore, GradientSet& grads) {
  (void)sets;
  Eigen::Index off = 0;
  Vec d_global_vec, d_aspect_vec;

  if (config.uses_global_part()) {
    Vec global_out = t.global_vec;
    if (t.mask.active) global_out = global_out.cwiseProduct(t.mask.global_mask) / t.mask.keep;
    grads.output_weights.segment(off, config.global_dim) += dscore * global_out;
    d_global_vec = dscore * params.output_weights.segment(off, config.global_dim);
    if (t.mask.active) d_global_vec = d_global_vec.cwiseProduct(t.mask.global_mask) / t.mask.keep;
    off += config.global_dim;
  }
  if (config.uses_aspect_part()) {
    Vec aspect_out = t.aspect_vec;
    if (t.mask.active) aspect_out = aspect_out.cwiseProduct(t.mask.aspect_mask) / t.mask.keep;
    grads.output_weights.segment(off, config.aspect_dim) += dscore * aspect_out;
    d_aspect_vec = dscore * params.output_weights.segment(off, config.aspect_dim);
    if (t.mask.active) d_aspect_vec = d_aspect_vec.cwiseProduct(t.mask.aspect_mask) / t.mask.keep;
  }

  if (config.uses_global_part()) {
    grads.user_factors.row(user) +=
        d_global_vec.cwiseProduct(params.item_factors.row(item).transpose()).transpose();
    grads.item_factors.row(item) +=
        d_global_vec.cwiseProduct(params.user_factors.row(user).transpose()).transpose();
  }
  if (config.uses_aspect_part()) aspect_part_backward(params, config, t, d_aspect_vec, grads);
}

namespace {

void add_l2_gradients(const ModelParams& params, double lambda, GradientSet& grads) {
  if (lambda == 0.0) return;
  auto add = [&](auto& g, const auto& w) {
    if (w.size() > 0) g += (2.0 * lambda / static_cast<double>(w.size())) * w;
  };
  add(grads.user_factors, params.user_factors);
  add(grads.item_factors, params.item_factors);
  add(grads.output_weights, params.output_weights);
}

double triple_pass(const ModelParams& params, const AspectSets& sets, const Triple& tr,
                   double weight, const ForwardOptions& pos_opt, const ForwardOptions& neg_opt,
                   GradientSet& grads, TripleMasks* masks_out) {
  ForwardTrace pos_trace, neg_trace;
  const double pos = forward(params, params.config, sets, tr.user, tr.pos, pos_opt, pos_trace);
  const double neg = forward(params, params.config, sets, tr.user, tr.neg, neg_opt, neg_trace);
  const double loss = bpr_loss(pos, neg);
  // d/dpos of softplus(-(pos-neg)) = -sigmoid(neg-pos)
  const double d = sigmoid(neg - pos) * weight;
  backward_score(params, params.config, sets, tr.user, tr.pos, pos_trace, -d, grads);
  backward_score(params, params.config, sets, tr.user, tr.neg, neg_trace, d, grads);
  if (masks_out != nullptr) *masks_out = TripleMasks{pos_trace.mask, neg_trace.mask};
  return loss;
}

void merge_grads(GradientSet& into, const GradientSet& from) {
  auto add = [](auto& a, const auto& b) {
    if (b.size() > 0) a += b;
  };
  add(into.aspect_embeddings, from.aspect_embeddings);
  add(into.transform, from.transform);
  add(into.aspect_att, from.aspect_att);
  add(into.user_att, from.user_att);
  add(into.user_factors, from.user_factors);
  add(into.item_factors, from.item_factors);
  add(into.output_weights, from.output_weights);
}

}  // namespace

double batch_gradients(const ModelParams& params, const AspectSets& sets,
                       const std::vector<Triple>& batch, double lambda, bool training, Rng* rng,
                       GradientSet& grads, std::vector<TripleMasks>* masks_out, int threads) {
  grads = GradientSet::zeros_like(params);
  require(!batch.empty(), "empty gradient batch");
  const double weight = 1.0 / static_cast<double>(batch.size());

  double data_loss = 0.0;
  if (masks_out != nullptr) masks_out->resize(batch.size());

  if (threads <= 1 || batch.size() < 2) {
    ForwardOptions opt;
    opt.training = training;
    opt.rng = rng;
    for (std::size_t i = 0; i < batch.size(); ++i)
      data_loss += triple_pass(params, sets, batch[i], weight, opt, opt, grads,
                               masks_out ? &(*masks_out)[i] : nullptr);
  } else {
    // masks are drawn up front so the fan-out stays deterministic for a
    // fixed thread count
    std::vector<TripleMasks> masks(batch.size());
    if (training && params.config.dropout > 0.0) {
      require(rng != nullptr, "training-mode batch needs an rng");
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double keep = 1.0 - params.config.dropout;
      auto draw = [&](DropoutMask& m) {
        m.active = true;
        m.keep = keep;
        auto fill = [&](Vec& v, int n) {
          v.resize(n);
          for (int k = 0; k < n; ++k) v(k) = unit(*rng) < keep ? 1.0 : 0.0;
        };
        if (params.config.uses_global_part()) fill(m.global_mask, params.config.global_dim);
        if (params.config.uses_aspect_part()) fill(m.aspect_mask, params.config.aspect_dim);
      };
      for (auto& m : masks) {
        draw(m.pos);
        draw(m.neg);
      }
    }
    const int n_threads = std::min<int>(threads, static_cast<int>(batch.size()));
    std::vector<GradientSet> partial(n_threads);
    std::vector<double> partial_loss(n_threads, 0.0);
    std::vector<std::thread> pool;
    for (int tid = 0; tid < n_threads; ++tid) {
      pool.emplace_back([&, tid] {
        partial[tid] = GradientSet::zeros_like(params);
        for (std::size_t i = tid; i < batch.size(); i += n_threads) {
          ForwardOptions pos_opt, neg_opt;
          pos_opt.training = neg_opt.training = training;
          if (training && params.config.dropout > 0.0) {
            pos_opt.fixed_mask = &masks[i].pos;
            neg_opt.fixed_mask = &masks[i].neg;
          }
          partial_loss[tid] += triple_pass(params, sets, batch[i], weight, pos_opt, neg_opt,
                                           partial[tid], nullptr);
        }
      });
    }
    for (auto& th : pool) th.join();
    for (int tid = 0; tid < n_threads; ++tid) {
      merge_grads(grads, partial[tid]);
      data_loss += partial_loss[tid];
    }
    if (masks_out != nullptr) *masks_out = masks;
  }

  data_loss *= weight;
  const double loss = data_loss + l2_penalty(params, lambda);
  add_l2_gradients(params, lambda, grads);

  if (!std::isfinite(loss) || !grads.all_finite()) {
    std::string msg = "non-finite loss/gradient in batch of " + std::to_string(batch.size()) +
                      " (first triple u=" + std::to_string(batch[0].user) +
                      " pos=" + std::to_string(batch[0].pos) +
                      " neg=" + std::to_string(batch[0].neg) + ")";
    fail(msg);
  }
  return loss;
}

double batch_loss(const ModelParams& params, const AspectSets& sets,
                  const std::vector<Triple>& batch, double lambda,
                  const std::vector<TripleMasks>* masks) {
  require(!batch.empty(), "empty loss batch");
  if (masks != nullptr)
    require(masks->size() == batch.size(), "mask count does not match batch size");
  double data_loss = 0.0;
  ForwardTrace trace;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ForwardOptions pos_opt, neg_opt;
    if (masks != nullptr && (*masks)[i].pos.active) {
      pos_opt.training = neg_opt.training = true;
      pos_opt.fixed_mask = &(*masks)[i].pos;
      neg_opt.fixed_mask = &(*masks)[i].neg;
    }
    const double pos = forward(params, params.config, sets, batch[i].user, batch[i].pos, pos_opt, trace);
    const double neg = forward(params, params.config, sets, batch[i].user, batch[i].neg, neg_opt, trace);
    data_loss += bpr_loss(pos, neg);
  }
  return data_loss / static_cast<double>(batch.size()) + l2_penalty(params, lambda);
}

}  // namespace aarm
