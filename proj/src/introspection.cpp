#include "aarm/introspection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace aarm {

using nlohmann::json;

namespace {

int find_id(const std::vector<std::string>& names, const std::string& id, const char* kind) {
  auto it = std::find(names.begin(), names.end(), id);
  require(it != names.end(), std::string("unknown ") + kind + " id: " + id);
  return static_cast<int>(it - names.begin());
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

AttentionDump attention_trace(const ModelParams& params, const DatasetBundle& bundle,
                              const std::string& user_id, const std::string& item_id) {
  validate_against_bundle(params, bundle);
  const int u = find_id(bundle.users, user_id, "user");
  const int v = find_id(bundle.items, item_id, "item");

  ForwardTrace trace;
  forward(params, params.config, bundle.sets, u, v, ForwardOptions{}, trace);

  AttentionDump dump;
  dump.user_id = user_id;
  dump.item_id = item_id;
  for (int a : trace.user_aspects) dump.user_aspects.push_back(bundle.vocab.aspects[a]);
  for (int a : trace.item_aspects) dump.item_aspects.push_back(bundle.vocab.aspects[a]);
  std::vector<int> item_sorted = trace.item_aspects;
  std::sort(item_sorted.begin(), item_sorted.end());
  for (int a : trace.user_aspects)
    dump.shared.push_back(std::binary_search(item_sorted.begin(), item_sorted.end(), a));
  dump.user_att = trace.user_att;
  dump.aspect_att = trace.aspect_att;
  return dump;
}

json dump_to_json(const AttentionDump& dump) {
  json user_aspects = json::array();
  for (std::size_t i = 0; i < dump.user_aspects.size(); ++i) {
    json entry = {{"aspect", dump.user_aspects[i]}, {"shared", static_cast<bool>(dump.shared[i])}};
    if (dump.user_att.size() == static_cast<Eigen::Index>(dump.user_aspects.size())) {
      entry["alpha"] = round6(dump.user_att(static_cast<Eigen::Index>(i)));
      entry["alpha_display"] = fixed4(dump.user_att(static_cast<Eigen::Index>(i)));
    }
    user_aspects.push_back(entry);
  }

  json beta = json::array();
  for (Eigen::Index i = 0; i < dump.aspect_att.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < dump.aspect_att.cols(); ++j)
      row.push_back(round6(dump.aspect_att(i, j)));
    beta.push_back(row);
  }

  return {{"user", dump.user_id},
          {"item", dump.item_id},
          {"user_aspects", user_aspects},
          {"item_aspects", dump.item_aspects},
          {"aspect_attention", beta}};
}

std::string dump_to_csv(const AttentionDump& dump) {
  std::string csv = "user_aspect";
  for (const auto& a : dump.item_aspects) csv += "," + a;
  csv += "\n";
  for (Eigen::Index i = 0; i < dump.aspect_att.rows(); ++i) {
    csv += dump.user_aspects[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < dump.aspect_att.cols(); ++j)
      csv += "," + format_double(round6(dump.aspect_att(i, j)));
    csv += "\n";
  }
  return csv;
}

namespace {

int shared_count(const std::vector<int>& a, const std::vector<int>& b) {
  int n = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j)
      ++i;
    else if (*j < *i)
      ++j;
    else {
      ++n;
      ++i;
      ++j;
    }
  }
  return n;
}

std::vector<int> non_pad_sorted(const std::vector<int>& padded) {
  std::vector<int> out;
  for (int a : padded)
    if (a != kPadIndex) out.push_back(a);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

SharedAspectHistogram shared_aspect_distribution(const DatasetBundle& bundle, bool truncated,
                                                 long long sample_size, std::uint64_t seed) {
  const auto n_users = static_cast<long long>(bundle.user_count());
  const auto n_items = static_cast<long long>(bundle.item_count());
  require(n_users > 0 && n_items > 0, "empty dataset");

  std::vector<std::vector<int>> user_sets(n_users), item_sets(n_items);
  for (long long u = 0; u < n_users; ++u)
    user_sets[u] = truncated ? non_pad_sorted(bundle.sets.user_sets[u])
                             : bundle.sets.raw_user_sets[u];
  for (long long v = 0; v < n_items; ++v)
    item_sets[v] = truncated ? non_pad_sorted(bundle.sets.item_sets[v])
                             : bundle.sets.raw_item_sets[v];

  SharedAspectHistogram hist;
  const long long total_pairs = n_users * n_items;
  constexpr long long kExactLimit = 4'000'000;
  constexpr long long kDefaultSamples = 1'000'000;

  long long samples = sample_size;
  if (samples == 0) samples = total_pairs <= kExactLimit ? -1 : kDefaultSamples;

  auto bucket = [&](int shared) { return shared > 5 ? 6 : shared; };

  if (samples < 0) {
    for (long long u = 0; u < n_users; ++u)
      for (long long v = 0; v < n_items; ++v)
        hist.counts[bucket(shared_count(user_sets[u], item_sets[v]))] += 1;
    hist.pairs = total_pairs;
  } else {
    Rng rng(derive_seed(seed, 0x7ab1e12u));
    std::uniform_int_distribution<long long> du(0, n_users - 1), dv(0, n_items - 1);
    for (long long s = 0; s < samples; ++s)
      hist.counts[bucket(shared_count(user_sets[du(rng)], item_sets[dv(rng)]))] += 1;
    hist.pairs = samples;
    hist.sampled = true;
    hist.sample_size = samples;
  }

  for (std::size_t b = 0; b < hist.ratios.size(); ++b)
    hist.ratios[b] = static_cast<double>(hist.counts[b]) / static_cast<double>(hist.pairs);
  return hist;
}

json histogram_to_json(const SharedAspectHistogram& hist) {
  static const char* labels[] = {"0", "1", "2", "3", "4", "5", ">5"};
  json buckets = json::array();
  for (std::size_t b = 0; b < hist.ratios.size(); ++b)
    buckets.push_back({{"shared_aspects", labels[b]},
                       {"count", hist.counts[b]},
                       {"percent", std::round(hist.ratios[b] * 100.0 * 1000.0) / 1000.0}});
  return {{"buckets", buckets},
          {"pairs", hist.pairs},
          {"mode", hist.sampled ? "sampled" : "exact"},
          {"sample_size", hist.sample_size}};
}

}  // namespace aarm
