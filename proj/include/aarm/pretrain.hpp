#pragma once

#include "aarm/common.hpp"
#include "aarm/corpus.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace aarm {

// One vector per corpus token; every vocabulary aspect is guaranteed a row.
struct EmbeddingTable {
  int dim = 0;
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  Mat vectors;  // tokens.size() x dim

  int lookup(const std::string& t) const {
    auto it = index.find(t);
    return it == index.end() ? -1 : it->second;
  }
};

// Corpus token form of an aspect phrase: spaces joined with '_'.
std::string aspect_token(const std::string& aspect);

// Merges multi-word aspect phrases into single tokens, leftmost-longest
// match against the vocabulary; all tokens lowercased.
std::vector<std::string> merge_aspect_phrases(const std::vector<std::string>& tokens,
                                              const AspectVocabulary& vocab);

std::vector<std::vector<std::string>> tokenize_reviews(const std::vector<std::string>& lines,
                                                       const AspectVocabulary& vocab);
std::vector<std::vector<std::string>> tokenize_reviews(const InteractionTable& table,
                                                       const AspectVocabulary& vocab,
                                                       bool train_only = true);

struct SgnsConfig {
  int dim = 128;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double lr_start = 0.025;
  double lr_end = 0.0001;
  int min_count = 5;  // aspects are always kept regardless
  std::uint64_t seed = 1;
  int threads = 1;  // >1 shards sentences hogwild-style (non-deterministic)
};

// Center-context pairs for one sentence under a fixed window; exposed for
// direct pair-count verification.
std::vector<std::pair<int, int>> sgns_pairs(int sentence_len, int window);

// Skip-gram with negative sampling on the token corpus; unigram^0.75 noise,
// no subsampling. Returns input vectors.
EmbeddingTable train_sgns(const std::vector<std::vector<std::string>>& corpus,
                          const AspectVocabulary& vocab, const SgnsConfig& cfg);

void save_embeddings(const EmbeddingTable& table, const std::string& path);
EmbeddingTable load_embeddings(const std::string& path, int expected_dim = 0);

// Rows 1..|A| from the table (PAD row zero); missing aspects are an error
// naming them.
Mat aspect_embedding_matrix(const EmbeddingTable& table, const AspectVocabulary& vocab);

}  // namespace aarm
