#include "aarm/training.hpp"

#include "aarm/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace aarm {

using nlohmann::json;

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  s.m = GradientSet::zeros_like(params);
  s.v = GradientSet::zeros_like(params);
  return s;
}

namespace {

template <typename M>
void adam_update(M& theta, const M& g, M& m, M& v, double lr, double beta1, double beta2,
                 double eps, double corr1, double corr2) {
  if (g.size() == 0) return;
  m = beta1 * m + (1.0 - beta1) * g;
  v = (beta2 * v.array() + (1.0 - beta2) * g.array().square()).matrix();
  theta.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
}

}  // namespace

void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
  state.step += 1;
  const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));

  if (params.embeddings_trainable())
    adam_update(params.aspect_embeddings, grads.aspect_embeddings, state.m.aspect_embeddings,
                state.v.aspect_embeddings, lr, beta1, beta2, eps, corr1, corr2);
  if (params.transform_trainable())
    adam_update(params.transform, grads.transform, state.m.transform, state.v.transform, lr,
                beta1, beta2, eps, corr1, corr2);
  adam_update(params.aspect_att, grads.aspect_att, state.m.aspect_att, state.v.aspect_att, lr,
              beta1, beta2, eps, corr1, corr2);
  adam_update(params.user_att, grads.user_att, state.m.user_att, state.v.user_att, lr, beta1,
              beta2, eps, corr1, corr2);
  adam_update(params.user_factors, grads.user_factors, state.m.user_factors,
              state.v.user_factors, lr, beta1, beta2, eps, corr1, corr2);
  adam_update(params.item_factors, grads.item_factors, state.m.item_factors,
              state.v.item_factors, lr, beta1, beta2, eps, corr1, corr2);
  adam_update(params.output_weights, grads.output_weights, state.m.output_weights,
              state.v.output_weights, lr, beta1, beta2, eps, corr1, corr2);
}

NegativeSampler::NegativeSampler(const std::vector<std::vector<int>>& train_positives,
                                 int item_count)
    : positives_(train_positives), item_count_(item_count) {}

int NegativeSampler::sample(int user, Rng& rng) const {
  const auto& pos = positives_[user];
  require(static_cast<int>(pos.size()) < item_count_,
          "user " + std::to_string(user) + " has purchased every item; cannot sample a negative");
  std::uniform_int_distribution<int> dist(0, item_count_ - 1);
  while (true) {
    const int v = dist(rng);
    if (!std::binary_search(pos.begin(), pos.end(), v)) return v;
  }
}

EarlyStopper::EarlyStopper(int patience, int stall_measures)
    : patience_(patience), stall_measures_(stall_measures) {
  best_.fill(-1.0);
  stalled_.fill(0);
}

bool EarlyStopper::observe(const std::array<double, 4>& measures) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (measures[i] > best_[i]) {
      best_[i] = measures[i];
      stalled_[i] = 0;
    } else {
      stalled_[i] += 1;
    }
  }
  int stalled_count = 0;
  for (int s : stalled_)
    if (s >= patience_) ++stalled_count;
  return stalled_count >= stall_measures_;
}

void EarlyStopper::restore(const std::array<double, 4>& best, const std::array<int, 4>& stalled) {
  best_ = best;
  stalled_ = stalled;
}

namespace {

struct TrainState {
  int epoch = 0;  // completed epochs
  bool has_best = false;
  ModelParams best;
  AdamState adam;
  TrainHistory history;
  std::array<double, 4> stopper_best{};
  std::array<int, 4> stopper_stalled{};
};

void write_blob(std::ofstream& out, const double* data, Eigen::Index n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(double) * n));
}

void read_blob(std::ifstream& in, double* data, Eigen::Index n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(sizeof(double) * n));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(double) * n),
          "truncated training state");
}

template <typename Fn>
void for_each_params_matrix(ModelParams& p, Fn&& fn) {
  fn(p.aspect_embeddings);
  fn(p.transform);
  fn(p.aspect_att);
  fn(p.user_att);
  fn(p.user_factors);
  fn(p.item_factors);
  fn(p.output_weights);
}

template <typename Fn>
void for_each_grad_matrix(GradientSet& g, Fn&& fn) {
  fn(g.aspect_embeddings);
  fn(g.transform);
  fn(g.aspect_att);
  fn(g.user_att);
  fn(g.user_factors);
  fn(g.item_factors);
  fn(g.output_weights);
}

json history_to_json(const TrainHistory& h) {
  json cps = json::array();
  for (const auto& c : h.checkpoints)
    cps.push_back({{"epoch", c.epoch},
                   {"recall", c.recall},
                   {"precision", c.precision},
                   {"ndcg", c.ndcg},
                   {"hit_ratio", c.hit_ratio}});
  return {{"epoch_loss", h.epoch_loss},
          {"checkpoints", cps},
          {"stopping_epoch", h.stopping_epoch},
          {"best_checkpoint_epoch", h.best_checkpoint_epoch}};
}

TrainHistory history_from_json(const json& j) {
  TrainHistory h;
  h.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  for (const auto& c : j.at("checkpoints"))
    h.checkpoints.push_back({c.at("epoch").get<int>(), c.at("recall").get<double>(),
                             c.at("precision").get<double>(), c.at("ndcg").get<double>(),
                             c.at("hit_ratio").get<double>()});
  h.stopping_epoch = j.at("stopping_epoch").get<int>();
  h.best_checkpoint_epoch = j.at("best_checkpoint_epoch").get<int>();
  return h;
}

void save_train_state(const std::string& path, ModelParams& params, TrainState& st) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write training state: " + path);

  json header;
  header["epoch"] = st.epoch;
  header["step"] = st.adam.step;
  header["has_best"] = st.has_best;
  header["stopper"] = {{"best", st.stopper_best}, {"stalled", st.stopper_stalled}};
  header["history"] = history_to_json(st.history);
  out << kTrainStateFormat << '\n' << header.dump() << '\n';

  for_each_params_matrix(params, [&](auto& m) { write_blob(out, m.data(), m.size()); });
  if (st.has_best)
    for_each_params_matrix(st.best, [&](auto& m) { write_blob(out, m.data(), m.size()); });
  for_each_grad_matrix(st.adam.m, [&](auto& m) { write_blob(out, m.data(), m.size()); });
  for_each_grad_matrix(st.adam.v, [&](auto& m) { write_blob(out, m.data(), m.size()); });
  require(out.good(), "short write on training state: " + path);
}

void load_train_state(const std::string& path, ModelParams& params, TrainState& st) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read training state: " + path);
  std::string magic, header_line;
  require(static_cast<bool>(std::getline(in, magic)) && magic == kTrainStateFormat,
          path + ": not a training state file");
  require(static_cast<bool>(std::getline(in, header_line)), path + ": truncated header");
  const json header = json::parse(header_line);

  st.epoch = header.at("epoch").get<int>();
  st.has_best = header.at("has_best").get<bool>();
  st.history = history_from_json(header.at("history"));
  st.stopper_best = header.at("stopper").at("best").get<std::array<double, 4>>();
  st.stopper_stalled = header.at("stopper").at("stalled").get<std::array<int, 4>>();

  for_each_params_matrix(params, [&](auto& m) { read_blob(in, m.data(), m.size()); });
  if (st.has_best) {
    st.best = params;  // shapes
    for_each_params_matrix(st.best, [&](auto& m) { read_blob(in, m.data(), m.size()); });
  }
  st.adam = AdamState::zeros_like(params);
  st.adam.step = header.at("step").get<long long>();
  for_each_grad_matrix(st.adam.m, [&](auto& m) { read_blob(in, m.data(), m.size()); });
  for_each_grad_matrix(st.adam.v, [&](auto& m) { read_blob(in, m.data(), m.size()); });
}

}  // namespace

TrainResult train(const DatasetBundle& bundle, ModelParams params, const TrainConfig& cfg,
                  const std::string& state_path, bool resume, const TrainLogger& logger) {
  require(cfg.learning_rate > 0.0, "learning rate must be > 0");
  require(cfg.lambda >= 0.0, "L2 coefficient must be >= 0");
  require(cfg.batch_size >= 1, "batch size must be >= 1");
  require(cfg.max_epochs >= 0 && cfg.eval_every >= 1, "bad epoch configuration");
  validate_against_bundle(params, bundle);

  const auto train_pos = bundle.train_positives();

  // held-out validation pairs never enter a training batch
  std::unordered_set<long long> held;
  for (const auto& [u, v] : bundle.validation.entries)
    held.insert(static_cast<long long>(u) * bundle.item_count() + v);
  std::vector<std::pair<int, int>> base_pairs;
  for (int u = 0; u < bundle.user_count(); ++u)
    for (int v : train_pos[u])
      if (!held.count(static_cast<long long>(u) * bundle.item_count() + v))
        base_pairs.emplace_back(u, v);

  NegativeSampler sampler(train_pos, bundle.item_count());
  EarlyStopper stopper(cfg.patience_checkpoints, cfg.stall_measures);

  TrainState st;
  st.adam = AdamState::zeros_like(params);
  if (resume && !state_path.empty() && std::filesystem::exists(state_path)) {
    load_train_state(state_path, params, st);
    stopper.restore(st.stopper_best, st.stopper_stalled);
    if (logger) logger(json{{"resumed_at_epoch", st.epoch}}.dump());
  }

  auto log = [&](const json& j) {
    if (logger) logger(j.dump());
  };

  double best_ndcg = -1.0;
  for (const auto& c : st.history.checkpoints) best_ndcg = std::max(best_ndcg, c.ndcg);

  bool stop = false;
  for (int epoch = st.epoch; epoch < cfg.max_epochs && !stop; ++epoch) {
    // each epoch is a pure function of (seed, epoch) so interrupted runs
    // resume on the exact same trajectory
    Rng rng(derive_seed(cfg.seed, 0xe90c47ull, static_cast<std::uint64_t>(epoch)));
    std::vector<std::pair<int, int>> pairs = base_pairs;
    std::shuffle(pairs.begin(), pairs.end(), rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::vector<Triple> batch;
    batch.reserve(cfg.batch_size);
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      batch.clear();
      const std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i)
        batch.push_back({pairs[i].first, pairs[i].second, sampler.sample(pairs[i].first, rng)});

      GradientSet grads;
      const double loss = batch_gradients(params, bundle.sets, batch, cfg.lambda, true, &rng,
                                          grads, nullptr, cfg.threads);
      adam_step(params, grads, st.adam, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                cfg.adam_eps);
      loss_sum += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const double epoch_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
    st.history.epoch_loss.push_back(epoch_loss);
    st.history.stopping_epoch = epoch + 1;
    st.epoch = epoch + 1;
    log(json{{"epoch", epoch + 1}, {"loss", epoch_loss}});

    if ((epoch + 1) % cfg.eval_every == 0) {
      const EvalReport report = evaluate_validation(params, bundle, cfg.top_n, cfg.threads);
      CheckpointMetrics m{epoch + 1, report.recall, report.precision, report.ndcg,
                          report.hit_ratio};
      st.history.checkpoints.push_back(m);
      log(json{{"epoch", epoch + 1},
               {"checkpoint", true},
               {"recall", m.recall},
               {"precision", m.precision},
               {"ndcg", m.ndcg},
               {"hit_ratio", m.hit_ratio}});

      if (!st.has_best || m.ndcg > best_ndcg) {
        best_ndcg = m.ndcg;
        st.best = params;
        st.has_best = true;
        st.history.best_checkpoint_epoch = epoch + 1;
      }
      stop = stopper.observe({m.recall, m.precision, m.ndcg, m.hit_ratio});
      st.stopper_best = stopper.best();
      st.stopper_stalled = stopper.stalled();
      if (!state_path.empty()) save_train_state(state_path, params, st);
    }
  }

  TrainResult result;
  result.best = st.has_best ? std::move(st.best) : std::move(params);
  result.history = std::move(st.history);
  return result;
}

}  // namespace aarm
