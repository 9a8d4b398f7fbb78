#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aarm/corpus.hpp"
#include "support/tmpdir.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

using namespace aarm;
using testsup::TmpDir;

namespace {

std::string rec(const std::string& u, const std::string& v, double rating,
                const std::vector<std::string>& aspects = {},
                const std::vector<std::string>& tokens = {}) {
  std::string a, t;
  for (const auto& s : aspects) a += (a.empty() ? "" : ",") + ("\"" + s + "\"");
  for (const auto& s : tokens) t += (t.empty() ? "" : ",") + ("\"" + s + "\"");
  return "{\"user_id\":\"" + u + "\",\"item_id\":\"" + v + "\",\"rating\":" +
         std::to_string(rating) + ",\"aspects\":[" + a + "],\"review_tokens\":[" + t + "]}";
}

InteractionTable table_from_lines(const std::vector<std::string>& lines) {
  TmpDir dir("corpus");
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  testsup::write_file(dir.str("data.jsonl"), text);
  return load_interactions(dir.str("data.jsonl"));
}

std::string dir_fingerprint(const std::string& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += f.filename().string() + "\n" + testsup::read_file(f.string());
  return std::to_string(fnv1a(all));
}

}  // namespace

TEST_CASE("load_interactions counts users, items and records") {
  auto table = table_from_lines({rec("u1", "i1", 5.0), rec("u2", "i1", 3.0), rec("u1", "i2", 4.0)});
  CHECK(table.records.size() == 3);
  CHECK(table.user_count() == 2);
  CHECK(table.item_count() == 2);
  CHECK(table.user_index.size() == 2);
  CHECK(table.item_index.size() == 2);
}

TEST_CASE("load_interactions rejects an empty file") {
  TmpDir dir("corpus");
  testsup::write_file(dir.str("empty.jsonl"), "");
  CHECK_THROWS_WITH_AS(load_interactions(dir.str("empty.jsonl")),
                       doctest::Contains("no records"), std::runtime_error);
}

TEST_CASE("load_interactions reports the offending line") {
  TmpDir dir("corpus");
  testsup::write_file(dir.str("bad.jsonl"), rec("u1", "i1", 5.0) + "\n{not json}\n");
  CHECK_THROWS_WITH_AS(load_interactions(dir.str("bad.jsonl")), doctest::Contains("line 2"),
                       std::runtime_error);
}

TEST_CASE("load_interactions tolerates missing optional fields") {
  auto table = table_from_lines({"{\"user_id\":\"u\",\"item_id\":\"i\"}"});
  CHECK(table.records[0].aspects.empty());
  CHECK(table.records[0].rating == 1.0);
}

TEST_CASE("split keeps round(ratio*n) per user") {
  std::vector<std::string> lines;
  for (int i = 0; i < 10; ++i) lines.push_back(rec("u10", "i" + std::to_string(i), 5));
  for (int i = 0; i < 5; ++i) lines.push_back(rec("u5", "j" + std::to_string(i), 5));
  lines.push_back(rec("u1", "k0", 5));
  auto table = table_from_lines(lines);
  split_train_test(table, 0.7, 42);

  std::map<std::string, std::pair<int, int>> counts;  // user -> (train, test)
  for (std::size_t r = 0; r < table.records.size(); ++r) {
    auto& c = counts[table.records[r].user_id];
    (table.split[r] == Split::train ? c.first : c.second) += 1;
  }
  CHECK(counts["u10"] == std::pair<int, int>{7, 3});
  CHECK(counts["u5"] == std::pair<int, int>{4, 1});  // round(3.5) = 4
  CHECK(counts["u1"] == std::pair<int, int>{1, 0});
}

TEST_CASE("split rounding rule matches enumeration") {
  // independent enumeration of round(0.7*n) with clamps
  for (int n = 1; n <= 20; ++n) {
    std::vector<std::string> lines;
    for (int i = 0; i < n; ++i) lines.push_back(rec("u", "i" + std::to_string(i), 5));
    auto table = table_from_lines(lines);
    split_train_test(table, 0.7, 7);
    int train = 0;
    for (auto s : table.split) train += s == Split::train ? 1 : 0;
    long long expect = std::llround(0.7 * n);
    expect = std::max(1ll, expect);
    if (n >= 2) expect = std::min<long long>(expect, n - 1);
    CHECK(train == expect);
  }
}

TEST_CASE("split is deterministic and partitions records") {
  std::vector<std::string> lines;
  for (int u = 0; u < 8; ++u)
    for (int i = 0; i < 6; ++i)
      lines.push_back(rec("u" + std::to_string(u), "i" + std::to_string((u * 3 + i) % 10), 5));
  auto a = table_from_lines(lines);
  auto b = a;
  split_train_test(a, 0.7, 99);
  split_train_test(b, 0.7, 99);
  CHECK(a.split == b.split);
  CHECK(a.split.size() == a.records.size());
}

TEST_CASE("binarize ignores star values and deduplicates") {
  auto table = table_from_lines({rec("u", "low", 1.0), rec("u", "high", 5.0),
                                 rec("u", "dup", 2.0), rec("u", "dup", 4.0)});
  table.split.assign(table.records.size(), Split::train);
  auto positives = binarize(table);
  CHECK(positives[0].size() == 3);  // low, high, dup each once
}

TEST_CASE("tfidf matches the hand-evaluated anchor") {
  // target user: tf = {a:2, b:1}; |U| = 10; df(a) = 4
  std::vector<std::string> lines;
  lines.push_back(rec("u0", "i0", 5, {"a", "a", "b"}));
  for (int k = 1; k <= 3; ++k) lines.push_back(rec("u" + std::to_string(k), "i0", 5, {"a"}));
  for (int k = 4; k <= 9; ++k) lines.push_back(rec("u" + std::to_string(k), "i0", 5, {"c"}));
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);

  const double got = tfidf_user(stats, vocab.lookup("a"), 0);
  CHECK(std::abs(got - 0.46210) < 1e-5);
  CHECK(std::abs(got - (2.0 / 3.0) * std::log(10.0 / 5.0)) < 1e-12);
}

TEST_CASE("tfidf is zero when the idf ratio is one") {
  // df(a) = |U| - 1 = 3 and |U| = 4 -> ln(1) = 0
  std::vector<std::string> lines;
  for (int k = 0; k < 3; ++k) lines.push_back(rec("u" + std::to_string(k), "i0", 5, {"a"}));
  lines.push_back(rec("u3", "i0", 5, {"b"}));
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);
  CHECK(tfidf_user(stats, vocab.lookup("a"), 0) == doctest::Approx(0.0));
}

TEST_CASE("tfidf tf term normalizes to one for a single-aspect user") {
  std::vector<std::string> lines;
  lines.push_back(rec("u0", "i0", 5, {"a", "a", "a"}));
  lines.push_back(rec("u1", "i0", 5, {"b"}));
  lines.push_back(rec("u2", "i0", 5, {"b"}));
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);
  const double expected = std::log(3.0 / 2.0);  // df(a) = 1
  CHECK(tfidf_user(stats, vocab.lookup("a"), 0) == doctest::Approx(expected));
}

TEST_CASE("nearest-rank quantile uses the smallest value covering q") {
  CHECK(nearest_rank_quantile({2, 4, 6, 8}, 0.75) == 6);
  CHECK(nearest_rank_quantile({5}, 0.75) == 5);
  CHECK(nearest_rank_quantile({1, 2, 3, 4}, 1.0) == 4);
  CHECK(nearest_rank_quantile({}, 0.75) == 0);
}

TEST_CASE("aspect sets pad and truncate by tfidf") {
  // u0 mentions 3 aspects; u1..u4 mention 5 distinct aspects each so the
  // quantile lands at 5, leaving u0 padded with 2 slots
  std::vector<std::string> lines;
  lines.push_back(rec("u0", "i0", 5, {"p", "q", "r"}));
  for (int k = 1; k <= 4; ++k) {
    std::vector<std::string> as;
    for (int a = 0; a < 5; ++a) as.push_back("x" + std::to_string(k) + std::to_string(a));
    lines.push_back(rec("u" + std::to_string(k), "i0", 5, as));
  }
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);
  auto sets = build_aspect_sets(table, vocab, stats, 0.75);

  CHECK(sets.user_len == 5);
  const auto& s0 = sets.user_sets[0];
  CHECK(s0.size() == 5);
  CHECK(std::count(s0.begin(), s0.end(), kPadIndex) == 2);
  CHECK(s0[3] == kPadIndex);
  CHECK(s0[4] == kPadIndex);
}

TEST_CASE("truncation drops the lowest tfidf aspects") {
  // u0: a mentioned 3x, b 2x, c 1x; other users push df equal for all
  std::vector<std::string> lines;
  lines.push_back(rec("u0", "i0", 5, {"a", "a", "a", "b", "b", "c"}));
  lines.push_back(rec("u1", "i0", 5, {"a", "b", "c"}));
  lines.push_back(rec("u2", "i0", 5, {"d"}));
  lines.push_back(rec("u3", "i0", 5, {"d"}));
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);
  // M_u = 75% quantile of {3,3,1,1} -> 3; u0 keeps all three anyway, so
  // check the order question via a tighter cap using direct scores
  CHECK(tfidf_user(stats, vocab.lookup("a"), 0) > tfidf_user(stats, vocab.lookup("b"), 0));
  CHECK(tfidf_user(stats, vocab.lookup("b"), 0) > tfidf_user(stats, vocab.lookup("c"), 0));

  auto sets = build_aspect_sets(table, vocab, stats, 0.5);  // cap at 1... quantile of sizes
  // quantile({1,1,3,3}, 0.5) = 1 -> u0 keeps only its top-tfidf aspect "a"
  CHECK(sets.user_len == 1);
  CHECK(sets.user_sets[0] == std::vector<int>{vocab.lookup("a")});
}

TEST_CASE("tfidf ties keep the lower vocabulary index") {
  // two aspects with identical tf and df for u0
  std::vector<std::string> lines;
  lines.push_back(rec("u0", "i0", 5, {"beta", "alpha"}));
  lines.push_back(rec("u1", "i0", 5, {"gamma"}));
  lines.push_back(rec("u2", "i0", 5, {"gamma"}));
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);
  auto sets = build_aspect_sets(table, vocab, stats, 0.5);
  CHECK(sets.user_len == 1);
  // "alpha" sorts before "beta" in the vocabulary
  CHECK(sets.user_sets[0] == std::vector<int>{vocab.lookup("alpha")});
}

TEST_CASE("aspect sets never leak test-review aspects") {
  std::vector<std::string> lines = {rec("u0", "i0", 5, {"train_only"}),
                                    rec("u0", "i1", 5, {"test_only"})};
  auto table = table_from_lines(lines);
  table.split = {Split::train, Split::test};
  auto vocab = build_vocabulary(table);
  CHECK(vocab.lookup("test_only") == -1);
  auto stats = compute_corpus_stats(table, vocab);
  auto sets = build_aspect_sets(table, vocab, stats, 0.75);
  for (int a : sets.user_sets[0]) CHECK(a != -1);
  CHECK(sets.raw_user_sets[0] == std::vector<int>{vocab.lookup("train_only")});
  CHECK(sets.raw_item_sets[1].empty());  // i1 only has the test review
}

TEST_CASE("truncation is invariant to review order") {
  std::vector<std::string> base = {rec("u0", "i0", 5, {"a", "a", "b"}),
                                   rec("u0", "i1", 5, {"c", "d"}),
                                   rec("u0", "i2", 5, {"e", "a"}),
                                   rec("u1", "i0", 5, {"z"})};
  auto shuffled = base;
  std::swap(shuffled[0], shuffled[2]);

  auto kept = [](const std::vector<std::string>& lines) {
    auto table = table_from_lines(lines);
    table.split.assign(table.records.size(), Split::train);
    auto vocab = build_vocabulary(table);
    auto stats = compute_corpus_stats(table, vocab);
    auto sets = build_aspect_sets(table, vocab, stats, 0.25);
    std::vector<std::string> names;
    for (int a : sets.user_sets[0])
      if (a != kPadIndex) names.push_back(vocab.aspects[a]);
    return names;
  };
  CHECK(kept(base) == kept(shuffled));
}

TEST_CASE("quantile cap covers at least 75% of raw sets") {
  Rng rng(7);
  std::vector<std::string> lines;
  std::uniform_int_distribution<int> n_aspects(0, 12);
  for (int u = 0; u < 40; ++u) {
    std::vector<std::string> as;
    const int n = n_aspects(rng);
    for (int a = 0; a < n; ++a) as.push_back("a" + std::to_string((u + a * 7) % 30));
    lines.push_back(rec("u" + std::to_string(u), "i" + std::to_string(u % 5), 5, as));
  }
  auto table = table_from_lines(lines);
  table.split.assign(table.records.size(), Split::train);
  auto vocab = build_vocabulary(table);
  auto stats = compute_corpus_stats(table, vocab);
  auto sets = build_aspect_sets(table, vocab, stats, 0.75);

  int covered = 0;
  for (const auto& raw : sets.raw_user_sets)
    if (static_cast<int>(raw.size()) <= sets.user_len) ++covered;
  CHECK(covered * 4 >= static_cast<int>(sets.raw_user_sets.size()) * 3);
}

TEST_CASE("validation clamps, is deterministic, and holds out train items") {
  std::vector<std::string> lines;
  for (int u = 0; u < 12; ++u)
    for (int i = 0; i < 4; ++i)
      lines.push_back(rec("u" + std::to_string(u), "i" + std::to_string((u + i) % 9), 5));
  auto table = table_from_lines(lines);
  split_train_test(table, 0.7, 3);

  auto val1 = build_validation(table, 1000, 11);
  auto val2 = build_validation(table, 1000, 11);
  CHECK(val1.entries.size() == 12);  // clamped to |U|
  CHECK(val1.entries == val2.entries);

  auto positives = binarize(table);
  for (const auto& [u, v] : val1.entries)
    CHECK(std::binary_search(positives[u].begin(), positives[u].end(), v));

  auto val3 = build_validation(table, 5, 11);
  CHECK(val3.entries.size() == 5);
}

TEST_CASE("prepare/save/load round trips and reruns byte-identically") {
  TmpDir dir("bundle");
  std::vector<std::string> lines;
  for (int u = 0; u < 10; ++u)
    for (int i = 0; i < 5; ++i)
      lines.push_back(rec("u" + std::to_string(u), "i" + std::to_string((u * 2 + i) % 12), 5,
                          {"a" + std::to_string((u + i) % 6)}, {"tok", "a" + std::to_string(u % 6)}));
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  testsup::write_file(dir.str("in.jsonl"), text);

  PrepareConfig cfg;
  cfg.seed = 5;
  cfg.validation_users = 4;
  auto bundle = prepare_dataset(dir.str("in.jsonl"), cfg);
  save_bundle(bundle, dir.str("out1"));
  auto loaded = load_bundle(dir.str("out1"));
  save_bundle(loaded, dir.str("out2"));
  CHECK(dir_fingerprint(dir.str("out1")) == dir_fingerprint(dir.str("out2")));

  auto bundle2 = prepare_dataset(dir.str("in.jsonl"), cfg);
  save_bundle(bundle2, dir.str("out3"));
  CHECK(dir_fingerprint(dir.str("out1")) == dir_fingerprint(dir.str("out3")));

  CHECK(loaded.vocab.aspects[0] == "<PAD>");
  CHECK(loaded.sets.user_len == bundle.sets.user_len);
  CHECK(loaded.validation.entries == bundle.validation.entries);
}

TEST_CASE("per-user train plus test covers every record exactly once") {
  std::vector<std::string> lines;
  for (int u = 0; u < 6; ++u)
    for (int i = 0; i < 7; ++i)
      lines.push_back(rec("u" + std::to_string(u), "i" + std::to_string(i), 5));
  auto table = table_from_lines(lines);
  split_train_test(table, 0.7, 1);
  for (int u = 0; u < table.user_count(); ++u) {
    int train = 0, test = 0, total = 0;
    for (std::size_t r = 0; r < table.records.size(); ++r) {
      if (table.record_user[r] != u) continue;
      ++total;
      (table.split[r] == Split::train ? train : test) += 1;
    }
    CHECK(train + test == total);
    CHECK(train >= 1);
  }
}
