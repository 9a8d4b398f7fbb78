#include "aarm/pretrain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace aarm {

std::string aspect_token(const std::string& aspect) {
  std::string t = lowercase(aspect);
  for (auto& c : t)
    if (c == ' ') c = '_';
  return t;
}

namespace {

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream iss(s);
  std::vector<std::string> out;
  std::string w;
  while (iss >> w) out.push_back(w);
  return out;
}

}  // namespace

std::vector<std::string> merge_aspect_phrases(const std::vector<std::string>& tokens,
                                              const AspectVocabulary& vocab) {
  // first word -> candidate word sequences, longest first
  std::unordered_map<std::string, std::vector<std::vector<std::string>>> starts;
  for (int a = 1; a < vocab.size(); ++a) {
    auto words = split_words(lowercase(vocab.aspects[a]));
    if (words.empty()) continue;
    starts[words[0]].push_back(std::move(words));
  }
  for (auto& [_, cands] : starts)
    std::sort(cands.begin(), cands.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });

  std::vector<std::string> out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::string tok = lowercase(tokens[i]);
    std::size_t matched = 0;
    if (auto it = starts.find(tok); it != starts.end()) {
      for (const auto& cand : it->second) {
        if (i + cand.size() > tokens.size()) continue;
        bool ok = true;
        for (std::size_t k = 1; k < cand.size(); ++k)
          if (lowercase(tokens[i + k]) != cand[k]) {
            ok = false;
            break;
          }
        if (ok) {
          matched = cand.size();
          break;
        }
      }
    }
    if (matched > 0) {
      std::string merged = tok;
      for (std::size_t k = 1; k < matched; ++k) merged += '_' + lowercase(tokens[i + k]);
      out.push_back(std::move(merged));
      i += matched;
    } else {
      out.push_back(tok);
      ++i;
    }
  }
  return out;
}

std::vector<std::vector<std::string>> tokenize_reviews(const std::vector<std::string>& lines,
                                                       const AspectVocabulary& vocab) {
  std::vector<std::vector<std::string>> out;
  out.reserve(lines.size());
  for (const auto& l : lines) out.push_back(merge_aspect_phrases(split_words(l), vocab));
  return out;
}

std::vector<std::vector<std::string>> tokenize_reviews(const InteractionTable& table,
                                                       const AspectVocabulary& vocab,
                                                       bool train_only) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t r = 0; r < table.records.size(); ++r) {
    if (train_only && table.split[r] != Split::train) continue;
    out.push_back(merge_aspect_phrases(table.records[r].review_tokens, vocab));
  }
  return out;
}

std::vector<std::pair<int, int>> sgns_pairs(int sentence_len, int window) {
  std::vector<std::pair<int, int>> pairs;
  for (int t = 0; t < sentence_len; ++t) {
    const int lo = std::max(0, t - window);
    const int hi = std::min(sentence_len - 1, t + window);
    for (int c = lo; c <= hi; ++c)
      if (c != t) pairs.emplace_back(t, c);
  }
  return pairs;
}

namespace {

struct NoiseTable {
  std::vector<double> cdf;  // cumulative unigram^0.75 mass
  double total = 0.0;

  explicit NoiseTable(const std::vector<long long>& counts) {
    cdf.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
      total += std::pow(static_cast<double>(counts[i]), 0.75);
      cdf[i] = total;
    }
  }

  int draw(Rng& rng) const {
    std::uniform_real_distribution<double> dist(0.0, total);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), dist(rng));
    if (it == cdf.end()) --it;
    return static_cast<int>(it - cdf.begin());
  }
};

}  // namespace

EmbeddingTable train_sgns(const std::vector<std::vector<std::string>>& corpus,
                          const AspectVocabulary& vocab, const SgnsConfig& cfg) {
  require(!corpus.empty(), "empty corpus");
  require(cfg.dim >= 1 && cfg.window >= 1 && cfg.negatives >= 0, "bad sgns config");

  std::unordered_map<std::string, long long> counts;
  long long corpus_tokens = 0;
  for (const auto& sent : corpus)
    for (const auto& t : sent) {
      counts[t] += 1;
      ++corpus_tokens;
    }
  require(corpus_tokens > 0, "empty corpus");

  EmbeddingTable table;
  table.dim = cfg.dim;
  std::vector<long long> token_counts;
  auto add_token = [&](const std::string& t, long long c) {
    if (table.index.count(t)) return;
    table.index.emplace(t, static_cast<int>(table.tokens.size()));
    table.tokens.push_back(t);
    token_counts.push_back(c);
  };
  // aspects first, never dropped; then frequent tokens, count desc / lex asc
  for (int a = 1; a < vocab.size(); ++a) {
    const std::string t = aspect_token(vocab.aspects[a]);
    auto it = counts.find(t);
    add_token(t, it == counts.end() ? 0 : it->second);
  }
  std::vector<std::pair<std::string, long long>> rest(counts.begin(), counts.end());
  std::sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [t, c] : rest)
    if (c >= cfg.min_count) add_token(t, c);

  const int n_tokens = static_cast<int>(table.tokens.size());
  const int dim = cfg.dim;
  table.vectors.resize(n_tokens, dim);
  {
    Rng init_rng(derive_seed(cfg.seed, 0x1417u));
    std::uniform_real_distribution<double> dist(-0.5 / dim, 0.5 / dim);
    for (int i = 0; i < n_tokens; ++i)
      for (int d = 0; d < dim; ++d) table.vectors(i, d) = dist(init_rng);
  }
  Mat out_vectors = Mat::Zero(n_tokens, dim);

  // sentences mapped to ids, unknown tokens removed before windowing
  std::vector<std::vector<int>> sentences;
  long long total_centers = 0;
  for (const auto& sent : corpus) {
    std::vector<int> ids;
    ids.reserve(sent.size());
    for (const auto& t : sent) {
      const int id = table.lookup(t);
      if (id >= 0) ids.push_back(id);
    }
    if (ids.size() >= 2) {
      total_centers += static_cast<long long>(ids.size());
      sentences.push_back(std::move(ids));
    }
  }
  if (sentences.empty()) return table;  // nothing co-occurs; random init stands

  const NoiseTable noise(token_counts);
  std::atomic<long long> processed{0};
  const long long total_work = total_centers * cfg.epochs;

  auto worker = [&](int tid, int n_threads) {
    Rng rng(derive_seed(cfg.seed, 0x59a5u, static_cast<std::uint64_t>(tid)));
    Vec accum(dim);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (std::size_t s = tid; s < sentences.size(); s += n_threads) {
        const auto& ids = sentences[s];
        const double progress =
            static_cast<double>(processed.fetch_add(static_cast<long long>(ids.size()),
                                                    std::memory_order_relaxed)) /
            static_cast<double>(total_work);
        const double lr = std::max(cfg.lr_end, cfg.lr_start + (cfg.lr_end - cfg.lr_start) * progress);

        const int len = static_cast<int>(ids.size());
        for (int t = 0; t < len; ++t) {
          const int lo = std::max(0, t - cfg.window);
          const int hi = std::min(len - 1, t + cfg.window);
          for (int c = lo; c <= hi; ++c) {
            if (c == t) continue;
            const int center = ids[t];
            const int context = ids[c];
            auto in = table.vectors.row(center);
            accum.setZero();
            for (int k = 0; k <= cfg.negatives; ++k) {
              int target;
              double label;
              if (k == 0) {
                target = context;
                label = 1.0;
              } else {
                target = noise.draw(rng);
                if (target == context) continue;
                label = 0.0;
              }
              auto out = out_vectors.row(target);
              const double f = in.dot(out);
              const double g = (label - sigmoid(f)) * lr;
              accum += g * out.transpose();
              out += g * in;
            }
            in += accum.transpose();
          }
        }
      }
    }
  };

  const int n_threads = std::max(1, cfg.threads);
  if (n_threads == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t, n_threads);
    for (auto& th : pool) th.join();
  }

  require(table.vectors.allFinite(), "non-finite embedding after training");
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write embeddings: " + path);
  out << table.tokens.size() << ' ' << table.dim << '\n';
  for (std::size_t i = 0; i < table.tokens.size(); ++i) {
    out << table.tokens[i];
    for (int d = 0; d < table.dim; ++d) out << ' ' << format_double(table.vectors(i, d));
    out << '\n';
  }
}

EmbeddingTable load_embeddings(const std::string& path, int expected_dim) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read embeddings: " + path);
  std::size_t count = 0;
  int dim = 0;
  require(static_cast<bool>(in >> count >> dim), "bad embeddings header in " + path);
  if (expected_dim > 0 && dim != expected_dim)
    fail("dimension mismatch: " + path + " has dim " + std::to_string(dim) + ", expected " +
         std::to_string(expected_dim));

  EmbeddingTable table;
  table.dim = dim;
  table.tokens.reserve(count);
  table.vectors.resize(static_cast<Eigen::Index>(count), dim);
  for (std::size_t i = 0; i < count; ++i) {
    std::string tok;
    require(static_cast<bool>(in >> tok), "truncated embeddings file: " + path);
    for (int d = 0; d < dim; ++d)
      require(static_cast<bool>(in >> table.vectors(static_cast<Eigen::Index>(i), d)),
              "truncated embeddings file: " + path);
    table.index.emplace(tok, static_cast<int>(i));
    table.tokens.push_back(std::move(tok));
  }
  return table;
}

Mat aspect_embedding_matrix(const EmbeddingTable& table, const AspectVocabulary& vocab) {
  Mat m = Mat::Zero(vocab.size(), table.dim);
  std::vector<std::string> missing;
  for (int a = 1; a < vocab.size(); ++a) {
    const int id = table.lookup(aspect_token(vocab.aspects[a]));
    if (id < 0) {
      missing.push_back(vocab.aspects[a]);
      continue;
    }
    m.row(a) = table.vectors.row(id);
  }
  if (!missing.empty()) {
    std::string msg = "aspects missing from embeddings:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " \"" + missing[i] + "\"";
    if (missing.size() > 20) msg += " (+" + std::to_string(missing.size() - 20) + " more)";
    fail(msg);
  }
  return m;
}

}  // namespace aarm
