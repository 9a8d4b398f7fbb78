#include "aarm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace aarm {

UserMetrics list_metrics(const std::vector<int>& ranked, const std::vector<int>& truth, int n) {
  UserMetrics m;
  if (truth.empty()) return m;
  const auto len = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(n));
  int tp = 0;
  double dcg = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    if (std::binary_search(truth.begin(), truth.end(), ranked[i])) {
      ++tp;
      dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  const int ideal = std::min<int>(static_cast<int>(truth.size()), n);
  double idcg = 0.0;
  for (int i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);

  m.recall = static_cast<double>(tp) / static_cast<double>(truth.size());
  m.precision = static_cast<double>(tp) / static_cast<double>(n);
  m.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
  m.hit = tp > 0 ? 1 : 0;
  return m;
}

Scorer::Scorer(const ModelParams& params, const AspectSets& sets)
    : params_(params), sets_(sets), cache_(build_normed_cache(params)) {}

double Scorer::operator()(int user, int item) const {
  ForwardTrace trace;
  ForwardOptions opt;
  opt.cache = &cache_;
  return forward(params_, params_.config, sets_, user, item, opt, trace);
}

std::vector<int> rank_candidates(const ItemScoreFn& score, int item_count,
                                 const std::vector<int>& exclude, int n) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(static_cast<std::size_t>(item_count));
  for (int v = 0; v < item_count; ++v) {
    if (std::binary_search(exclude.begin(), exclude.end(), v)) continue;
    scored.emplace_back(score(v), v);
  }
  auto better = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // ties: lower item index first
  };
  const auto keep = std::min<std::size_t>(scored.size(), static_cast<std::size_t>(n));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                    scored.end(), better);
  std::vector<int> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<int> recommend_top_n(const Scorer& scorer, int item_count,
                                 const std::vector<int>& train_positives, int user, int n) {
  return rank_candidates([&](int v) { return scorer(user, v); }, item_count, train_positives, n);
}

EvalReport evaluate_with(const ScoreFn& score, int item_count,
                         const std::vector<std::vector<int>>& exclude_per_user,
                         const std::vector<std::vector<int>>& truth_per_user,
                         const std::vector<int>& users, int n, int threads) {
  EvalReport report;
  report.top_n = n;
  report.user_ids = users;
  report.per_user.resize(users.size());

  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const int u = users[i];
      auto ranked =
          rank_candidates([&](int v) { return score(u, v); }, item_count, exclude_per_user[u], n);
      report.per_user[i] = list_metrics(ranked, truth_per_user[u], n);
    }
  };
  if (threads <= 1 || users.size() < 2) {
    work(0, users.size());
  } else {
    const auto n_threads = std::min<std::size_t>(threads, users.size());
    std::vector<std::thread> pool;
    const std::size_t chunk = (users.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back(work, t * chunk, std::min(users.size(), (t + 1) * chunk));
    for (auto& th : pool) th.join();
  }

  for (const auto& m : report.per_user) {
    report.recall += m.recall;
    report.precision += m.precision;
    report.ndcg += m.ndcg;
    report.hit_ratio += m.hit;
  }
  if (!report.per_user.empty()) {
    const auto count = static_cast<double>(report.per_user.size());
    report.recall /= count;
    report.precision /= count;
    report.ndcg /= count;
    report.hit_ratio /= count;
  }
  return report;
}

EvalReport evaluate(const ModelParams& params, const DatasetBundle& bundle, int n, int threads) {
  require(n >= 1, "top-N cutoff must be >= 1");
  const auto train = bundle.train_positives();
  const auto test = bundle.test_positives();
  std::vector<int> users;
  for (int u = 0; u < bundle.user_count(); ++u)
    if (!test[u].empty()) users.push_back(u);
  require(!users.empty(), "no users with test interactions");

  Scorer scorer(params, bundle.sets);
  return evaluate_with([&](int u, int v) { return scorer(u, v); }, bundle.item_count(), train,
                       test, users, n, threads);
}

EvalReport evaluate_validation(const ModelParams& params, const DatasetBundle& bundle, int n,
                               int threads) {
  require(!bundle.validation.entries.empty(), "empty validation set");
  const auto train = bundle.train_positives();
  std::vector<std::vector<int>> exclude(bundle.user_count());
  std::vector<std::vector<int>> truth(bundle.user_count());
  std::vector<int> users;
  users.reserve(bundle.validation.entries.size());
  for (const auto& [u, held] : bundle.validation.entries) {
    // the held-out pair is itself a train positive; it competes with
    // everything the user has not trained on
    exclude[u] = train[u];
    auto it = std::lower_bound(exclude[u].begin(), exclude[u].end(), held);
    if (it != exclude[u].end() && *it == held) exclude[u].erase(it);
    truth[u] = {held};
    users.push_back(u);
  }
  Scorer scorer(params, bundle.sets);
  return evaluate_with([&](int u, int v) { return scorer(u, v); }, bundle.item_count(), exclude,
                       truth, users, n, threads);
}

double round_percent(double fraction) { return std::round(fraction * 100.0 * 1000.0) / 1000.0; }

}  // namespace aarm
