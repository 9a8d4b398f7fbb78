#pragma once

// Synthetic interaction corpus where preferences follow shared aspects:
// positives are drawn with probability proportional to |A_u intersect A_v|.

#include "aarm/common.hpp"
#include "aarm/corpus.hpp"

#include "tmpdir.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace testsup {

struct SynthConfig {
  int users = 200;
  int items = 200;
  int aspects = 30;
  int aspect_clusters = 10;  // interest communities; 1 disables clustering
  int positives_min = 10, positives_max = 16;
  int filler_vocab = 80;
  int filler_per_review = 12;
  std::uint64_t seed = 1;
};

inline std::vector<std::string> synth_aspect_names(int n) {
  std::vector<std::string> names;
  for (int a = 0; a < n; ++a) {
    // a few two-word phrases keep the phrase-merging path exercised
    if (a % 7 == 3)
      names.push_back("feat" + std::to_string(a) + " pro");
    else
      names.push_back("feat" + std::to_string(a));
  }
  return names;
}

inline void write_synthetic_jsonl(const std::string& path, const SynthConfig& cfg) {
  aarm::Rng rng(aarm::derive_seed(cfg.seed, 0x5e77u));
  const auto aspect_names = synth_aspect_names(cfg.aspects);
  std::uniform_real_distribution<double> unit01(0.0, 1.0);

  // aspects fall into interest communities; a user or item draws most of
  // its set from one community, so shared-aspect counts are bimodal and
  // preference actually follows aspect overlap
  const int clusters = std::max(1, cfg.aspect_clusters);
  auto subset = [&]() {
    std::vector<int> out;
    const int home = std::uniform_int_distribution<int>(0, clusters - 1)(rng);
    for (int a = 0; a < cfg.aspects; ++a) {
      const bool in_home = a % clusters == home;
      const double p = clusters == 1 ? 0.2 : (in_home ? 0.8 : 0.04);
      if (unit01(rng) < p) out.push_back(a);
    }
    if (out.empty()) out.push_back(home);
    return out;
  };

  std::vector<std::vector<int>> user_aspects(cfg.users), item_aspects(cfg.items);
  for (auto& s : user_aspects) s = subset();
  for (auto& s : item_aspects) s = subset();

  std::ofstream out(path, std::ios::binary);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> filler(0, cfg.filler_vocab - 1);
  std::uniform_int_distribution<int> n_pos_dist(cfg.positives_min, cfg.positives_max);
  std::uniform_int_distribution<int> rating_dist(1, 5);

  for (int u = 0; u < cfg.users; ++u) {
    // weight items by shared-aspect count, uniform fallback
    std::vector<double> weight(cfg.items, 0.0);
    double total = 0.0;
    for (int v = 0; v < cfg.items; ++v) {
      std::vector<int> inter;
      std::set_intersection(user_aspects[u].begin(), user_aspects[u].end(),
                            item_aspects[v].begin(), item_aspects[v].end(),
                            std::back_inserter(inter));
      weight[v] = static_cast<double>(inter.size());
      total += weight[v];
    }
    if (total == 0.0) {
      std::fill(weight.begin(), weight.end(), 1.0);
      total = cfg.items;
    }

    const int n_pos = n_pos_dist(rng);
    std::vector<bool> picked(cfg.items, false);
    for (int k = 0; k < n_pos; ++k) {
      double r = unit(rng) * total;
      int v = 0;
      for (; v < cfg.items; ++v) {
        if (picked[v]) continue;
        if (r < weight[v]) break;
        r -= weight[v];
      }
      if (v >= cfg.items) break;
      picked[v] = true;
      total -= weight[v];
      if (total <= 0.0) break;
    }

    for (int v = 0; v < cfg.items; ++v) {
      if (!picked[v]) continue;
      std::vector<int> shared;
      std::set_intersection(user_aspects[u].begin(), user_aspects[u].end(),
                            item_aspects[v].begin(), item_aspects[v].end(),
                            std::back_inserter(shared));
      std::vector<int> mentioned;
      for (int a : shared)
        if (unit(rng) < 0.9) mentioned.push_back(a);
      for (int a : user_aspects[u])
        if (unit(rng) < 0.2) mentioned.push_back(a);
      for (int a : item_aspects[v])
        if (unit(rng) < 0.2) mentioned.push_back(a);
      std::sort(mentioned.begin(), mentioned.end());
      mentioned.erase(std::unique(mentioned.begin(), mentioned.end()), mentioned.end());

      std::string aspects_json, tokens_json;
      for (int a : mentioned) {
        if (!aspects_json.empty()) aspects_json += ",";
        aspects_json += "\"" + aspect_names[a] + "\"";
      }
      std::vector<std::string> tokens;
      for (int t = 0; t < cfg.filler_per_review; ++t)
        tokens.push_back("w" + std::to_string(filler(rng)));
      for (int a : mentioned) {
        // aspect words dropped into the token stream at random offsets
        std::uniform_int_distribution<std::size_t> pos(0, tokens.size());
        const auto& name = aspect_names[a];
        std::size_t at = pos(rng);
        std::string word;
        std::vector<std::string> words;
        for (char c : name) {
          if (c == ' ') {
            words.push_back(word);
            word.clear();
          } else {
            word += c;
          }
        }
        words.push_back(word);
        tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(at), words.begin(), words.end());
      }
      for (const auto& t : tokens) {
        if (!tokens_json.empty()) tokens_json += ",";
        tokens_json += "\"" + t + "\"";
      }

      out << "{\"user_id\":\"u" << u << "\",\"item_id\":\"i" << v << "\",\"rating\":"
          << rating_dist(rng) << ",\"review_tokens\":[" << tokens_json << "],\"aspects\":["
          << aspects_json << "]}\n";
    }
  }
}

inline aarm::DatasetBundle make_synth_bundle(TmpDir& dir, int users, int items,
                                             std::uint64_t seed, int validation_users = 8) {
  SynthConfig sc;
  sc.users = users;
  sc.items = items;
  sc.aspects = 12;
  sc.positives_min = 6;
  sc.positives_max = 10;
  sc.seed = seed;
  write_synthetic_jsonl(dir.str("synth.jsonl"), sc);
  aarm::PrepareConfig pc;
  pc.seed = seed;
  pc.validation_users = validation_users;
  return aarm::prepare_dataset(dir.str("synth.jsonl"), pc);
}

}  // namespace testsup
