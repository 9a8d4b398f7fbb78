#include "aarm/corpus.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

namespace aarm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string lowercase(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string format_double(double v, int significant) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", significant, v);
  return buf;
}

namespace {

int intern(const std::string& id, std::vector<std::string>& names,
           std::unordered_map<std::string, int>& index) {
  auto it = index.find(id);
  if (it != index.end()) return it->second;
  int idx = static_cast<int>(names.size());
  names.push_back(id);
  index.emplace(id, idx);
  return idx;
}

std::vector<std::string> string_array(const json& j, const char* key, int line) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const auto& arr = j.at(key);
  require(arr.is_array(), "line " + std::to_string(line) + ": field '" + key + "' must be an array");
  out.reserve(arr.size());
  for (const auto& e : arr) {
    require(e.is_string(), "line " + std::to_string(line) + ": field '" + key + "' must contain strings");
    out.push_back(lowercase(e.get<std::string>()));
  }
  return out;
}

}  // namespace

InteractionTable load_interactions(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open interactions file: " + path);

  InteractionTable table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("line " + std::to_string(lineno) + ": JSON parse error: " + e.what());
    }
    require(j.is_object(), "line " + std::to_string(lineno) + ": record must be a JSON object");
    require(j.contains("user_id") && j.at("user_id").is_string(),
            "line " + std::to_string(lineno) + ": missing string field 'user_id'");
    require(j.contains("item_id") && j.at("item_id").is_string(),
            "line " + std::to_string(lineno) + ": missing string field 'item_id'");

    InteractionRecord rec;
    rec.user_id = j.at("user_id").get<std::string>();
    rec.item_id = j.at("item_id").get<std::string>();
    require(!rec.user_id.empty(), "line " + std::to_string(lineno) + ": empty user_id");
    require(!rec.item_id.empty(), "line " + std::to_string(lineno) + ": empty item_id");
    if (j.contains("rating")) {
      require(j.at("rating").is_number(), "line " + std::to_string(lineno) + ": 'rating' must be a number");
      rec.rating = j.at("rating").get<double>();
    } else {
      rec.rating = 1.0;
    }
    rec.review_tokens = string_array(j, "review_tokens", lineno);
    rec.aspects = string_array(j, "aspects", lineno);

    table.record_user.push_back(intern(rec.user_id, table.users, table.user_index));
    table.record_item.push_back(intern(rec.item_id, table.items, table.item_index));
    table.records.push_back(std::move(rec));
  }
  require(!table.records.empty(), "no records in " + path);
  return table;
}

void split_train_test(InteractionTable& table, double ratio, std::uint64_t seed) {
  require(ratio > 0.0 && ratio < 1.0, "split ratio must be in (0,1)");
  const int n = static_cast<int>(table.records.size());
  table.split.assign(n, Split::test);

  std::vector<std::vector<int>> per_user(table.user_count());
  for (int r = 0; r < n; ++r) per_user[table.record_user[r]].push_back(r);

  for (int u = 0; u < table.user_count(); ++u) {
    auto& recs = per_user[u];
    const auto n_u = static_cast<long long>(recs.size());
    long long k = std::llround(ratio * static_cast<double>(n_u));
    k = std::max(1ll, k);
    if (n_u >= 2) k = std::min(k, n_u - 1);

    // per-user derived rng: the split of one user is independent of all others
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(u), 0x59117u));
    std::shuffle(recs.begin(), recs.end(), rng);
    for (long long i = 0; i < k; ++i) table.split[recs[i]] = Split::train;
  }
}

std::vector<std::vector<int>> binarize(const InteractionTable& table) {
  require(table.has_split(), "binarize requires a split table");
  std::vector<std::vector<int>> positives(table.user_count());
  for (std::size_t r = 0; r < table.records.size(); ++r) {
    if (table.split[r] != Split::train) continue;
    positives[table.record_user[r]].push_back(table.record_item[r]);
  }
  for (auto& v : positives) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return positives;
}

AspectVocabulary build_vocabulary(const InteractionTable& table, bool train_only) {
  if (train_only) require(table.has_split(), "train-only vocabulary requires a split table");
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < table.records.size(); ++r) {
    if (train_only && table.split[r] != Split::train) continue;
    for (const auto& a : table.records[r].aspects) seen.insert(a);
  }
  AspectVocabulary vocab;
  vocab.aspects.reserve(seen.size() + 1);
  vocab.aspects.emplace_back("<PAD>");
  std::vector<std::string> sorted(seen.begin(), seen.end());
  std::sort(sorted.begin(), sorted.end());
  for (auto& a : sorted) vocab.aspects.push_back(std::move(a));
  for (int i = 0; i < vocab.size(); ++i) vocab.index.emplace(vocab.aspects[i], i);
  return vocab;
}

CorpusStats compute_corpus_stats(const InteractionTable& table, const AspectVocabulary& vocab,
                                 bool train_only) {
  CorpusStats st;
  st.user_count = table.user_count();
  st.item_count = table.item_count();
  st.user_tf.resize(st.user_count);
  st.user_tf_total.assign(st.user_count, 0);
  st.item_tf.resize(st.item_count);
  st.item_tf_total.assign(st.item_count, 0);
  st.user_df.assign(vocab.size(), 0);
  st.item_df.assign(vocab.size(), 0);

  for (std::size_t r = 0; r < table.records.size(); ++r) {
    if (train_only && table.split[r] != Split::train) continue;
    const int u = table.record_user[r];
    const int v = table.record_item[r];
    for (const auto& s : table.records[r].aspects) {
      const int a = vocab.lookup(s);
      if (a <= kPadIndex) continue;  // unknown under train-only vocab, or PAD
      st.user_tf[u][a] += 1;
      st.user_tf_total[u] += 1;
      st.item_tf[v][a] += 1;
      st.item_tf_total[v] += 1;
    }
  }
  for (int u = 0; u < st.user_count; ++u)
    for (const auto& [a, _] : st.user_tf[u]) st.user_df[a] += 1;
  for (int v = 0; v < st.item_count; ++v)
    for (const auto& [a, _] : st.item_tf[v]) st.item_df[a] += 1;
  return st;
}

double tfidf_user(const CorpusStats& stats, int aspect, int user) {
  const auto& tf = stats.user_tf[user];
  auto it = tf.find(aspect);
  require(it != tf.end(), "tfidf: aspect not mentioned by user");
  const double tf_frac = static_cast<double>(it->second) / static_cast<double>(stats.user_tf_total[user]);
  return tf_frac * std::log(static_cast<double>(stats.user_count) /
                            static_cast<double>(stats.user_df[aspect] + 1));
}

double tfidf_item(const CorpusStats& stats, int aspect, int item) {
  const auto& tf = stats.item_tf[item];
  auto it = tf.find(aspect);
  require(it != tf.end(), "tfidf: aspect not mentioned for item");
  const double tf_frac = static_cast<double>(it->second) / static_cast<double>(stats.item_tf_total[item]);
  return tf_frac * std::log(static_cast<double>(stats.item_count) /
                            static_cast<double>(stats.item_df[aspect] + 1));
}

int nearest_rank_quantile(std::vector<int> sizes, double q) {
  if (sizes.empty()) return 0;
  std::sort(sizes.begin(), sizes.end());
  const auto n = static_cast<double>(sizes.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, sizes.size());
  return sizes[rank - 1];
}

namespace {

// Distinct aspects sorted ascending, then truncated to `cap` by dropping the
// lowest-scoring ones. Ties keep the lower vocabulary index.
std::vector<int> truncate_set(const std::unordered_map<int, int>& tf, int cap,
                              const std::function<double(int)>& score) {
  std::vector<int> ids;
  ids.reserve(tf.size());
  for (const auto& [a, _] : tf) ids.push_back(a);
  std::sort(ids.begin(), ids.end());
  if (static_cast<int>(ids.size()) > cap) {
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      const double sa = score(a), sb = score(b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    ids.resize(cap);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

std::vector<int> pad_set(std::vector<int> ids, int len) {
  ids.resize(len, kPadIndex);
  return ids;
}

}  // namespace

AspectSets build_aspect_sets(const InteractionTable& table, const AspectVocabulary& vocab,
                             const CorpusStats& stats, double quantile) {
  AspectSets sets;
  const int n_users = table.user_count();
  const int n_items = table.item_count();

  std::vector<int> user_sizes(n_users), item_sizes(n_items);
  for (int u = 0; u < n_users; ++u) user_sizes[u] = static_cast<int>(stats.user_tf[u].size());
  for (int v = 0; v < n_items; ++v) item_sizes[v] = static_cast<int>(stats.item_tf[v].size());

  sets.user_len = std::max(1, nearest_rank_quantile(user_sizes, quantile));
  sets.item_len = std::max(1, nearest_rank_quantile(item_sizes, quantile));

  sets.raw_user_sets.resize(n_users);
  sets.user_sets.resize(n_users);
  for (int u = 0; u < n_users; ++u) {
    auto full = truncate_set(stats.user_tf[u], static_cast<int>(stats.user_tf[u].size()),
                             [&](int a) { return tfidf_user(stats, a, u); });
    sets.raw_user_sets[u] = full;
    auto kept = truncate_set(stats.user_tf[u], sets.user_len,
                             [&](int a) { return tfidf_user(stats, a, u); });
    sets.user_sets[u] = pad_set(std::move(kept), sets.user_len);
  }

  sets.raw_item_sets.resize(n_items);
  sets.item_sets.resize(n_items);
  for (int v = 0; v < n_items; ++v) {
    auto full = truncate_set(stats.item_tf[v], static_cast<int>(stats.item_tf[v].size()),
                             [&](int a) { return tfidf_item(stats, a, v); });
    sets.raw_item_sets[v] = full;
    auto kept = truncate_set(stats.item_tf[v], sets.item_len,
                             [&](int a) { return tfidf_item(stats, a, v); });
    sets.item_sets[v] = pad_set(std::move(kept), sets.item_len);
  }
  (void)vocab;
  return sets;
}

ValidationSet build_validation(const InteractionTable& table, int n_users, std::uint64_t seed) {
  require(table.has_split(), "validation requires a split table");
  auto positives = binarize(table);

  std::vector<int> order(table.user_count());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x7a11da7e));
  std::shuffle(order.begin(), order.end(), rng);

  const int k = std::min<int>(n_users, table.user_count());
  std::vector<int> chosen(order.begin(), order.begin() + k);
  std::sort(chosen.begin(), chosen.end());

  ValidationSet val;
  val.entries.reserve(chosen.size());
  for (int u : chosen) {
    const auto& pos = positives[u];
    require(!pos.empty(), "user without train positives: " + table.users[u]);
    Rng pick(derive_seed(seed, static_cast<std::uint64_t>(u), 0x7a1edull));
    std::uniform_int_distribution<std::size_t> dist(0, pos.size() - 1);
    val.entries.emplace_back(u, pos[dist(pick)]);
  }
  return val;
}

std::vector<std::vector<int>> DatasetBundle::train_positives() const {
  std::vector<std::vector<int>> pos(user_count());
  for (const auto& [u, v, s] : records)
    if (s == Split::train) pos[u].push_back(v);
  for (auto& p : pos) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  return pos;
}

std::vector<std::vector<int>> DatasetBundle::test_positives() const {
  auto train = train_positives();
  std::vector<std::vector<int>> pos(user_count());
  for (const auto& [u, v, s] : records)
    if (s == Split::test) pos[u].push_back(v);
  for (int u = 0; u < user_count(); ++u) {
    auto& p = pos[u];
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
    // a pair seen in both splits stays a train positive and is never a
    // reachable ground truth, so drop it from the test side
    std::vector<int> kept;
    std::set_difference(p.begin(), p.end(), train[u].begin(), train[u].end(),
                        std::back_inserter(kept));
    p = std::move(kept);
  }
  return pos;
}

DatasetBundle prepare_dataset(const InteractionTable& input, const PrepareConfig& cfg) {
  InteractionTable table = input;
  if (!table.has_split()) split_train_test(table, cfg.ratio, cfg.seed);

  DatasetBundle bundle;
  bundle.users = table.users;
  bundle.items = table.items;
  bundle.vocab = build_vocabulary(table, cfg.aspects_from_train_only);
  auto stats = compute_corpus_stats(table, bundle.vocab, cfg.aspects_from_train_only);
  bundle.sets = build_aspect_sets(table, bundle.vocab, stats, cfg.quantile);
  bundle.validation = build_validation(table, cfg.validation_users, cfg.seed);

  bundle.records.reserve(table.records.size());
  for (std::size_t r = 0; r < table.records.size(); ++r)
    bundle.records.emplace_back(table.record_user[r], table.record_item[r], table.split[r]);

  for (std::size_t r = 0; r < table.records.size(); ++r) {
    if (table.split[r] != Split::train) continue;
    std::string line;
    for (const auto& t : table.records[r].review_tokens) {
      if (!line.empty()) line += ' ';
      line += t;
    }
    bundle.corpus_lines.push_back(std::move(line));
  }
  return bundle;
}

DatasetBundle prepare_dataset(const std::string& jsonl_path, const PrepareConfig& cfg) {
  return prepare_dataset(load_interactions(jsonl_path), cfg);
}

namespace {

void write_lines(const fs::path& p, const std::vector<std::string>& lines, bool header = false) {
  std::ofstream out(p, std::ios::binary);
  require(out.good(), "cannot write " + p.string());
  if (header) out << kDataFormat << '\n';
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& p, bool header = false) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), "cannot read " + p.string());
  std::string line;
  std::vector<std::string> lines;
  if (header) {
    require(static_cast<bool>(std::getline(in, line)) && line == kDataFormat,
            p.string() + ": bad or missing format header");
  }
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::istringstream iss(s);
  int x;
  while (iss >> x) out.push_back(x);
  return out;
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);

  {
    std::ofstream meta(root / "meta.txt", std::ios::binary);
    require(meta.good(), "cannot write bundle meta");
    meta << kDataFormat << '\n'
         << "users " << bundle.user_count() << '\n'
         << "items " << bundle.item_count() << '\n'
         << "aspects " << bundle.vocab.aspect_count() << '\n'
         << "user_set_len " << bundle.sets.user_len << '\n'
         << "item_set_len " << bundle.sets.item_len << '\n'
         << "records " << bundle.records.size() << '\n';
  }
  write_lines(root / "users.txt", bundle.users);
  write_lines(root / "items.txt", bundle.items);
  write_lines(root / "vocab.txt", bundle.vocab.aspects);

  std::vector<std::string> recs;
  recs.reserve(bundle.records.size());
  for (const auto& [u, v, s] : bundle.records)
    recs.push_back(std::to_string(u) + '\t' + std::to_string(v) + '\t' +
                   (s == Split::train ? "train" : "test"));
  write_lines(root / "records.tsv", recs);

  auto dump_sets = [&](const char* name, const std::vector<std::vector<int>>& rows) {
    std::vector<std::string> lines;
    lines.reserve(rows.size());
    for (const auto& r : rows) lines.push_back(join_ints(r));
    write_lines(root / name, lines, /*header=*/true);
  };
  dump_sets("user_sets.txt", bundle.sets.user_sets);
  dump_sets("item_sets.txt", bundle.sets.item_sets);
  dump_sets("raw_user_sets.txt", bundle.sets.raw_user_sets);
  dump_sets("raw_item_sets.txt", bundle.sets.raw_item_sets);

  std::vector<std::string> val;
  val.reserve(bundle.validation.entries.size());
  for (const auto& [u, v] : bundle.validation.entries)
    val.push_back(std::to_string(u) + '\t' + std::to_string(v));
  write_lines(root / "validation.tsv", val);

  write_lines(root / "corpus.txt", bundle.corpus_lines);
}

DatasetBundle load_bundle(const std::string& dir) {
  const fs::path root(dir);
  require(fs::exists(root / "meta.txt"), "not a dataset bundle (missing meta.txt): " + dir);

  DatasetBundle bundle;
  std::size_t n_users = 0, n_items = 0, n_aspects = 0, n_records = 0;
  {
    auto meta = read_lines(root / "meta.txt", /*header=*/true);
    for (const auto& l : meta) {
      std::istringstream iss(l);
      std::string key;
      long long value = 0;
      iss >> key >> value;
      if (key == "users") n_users = value;
      else if (key == "items") n_items = value;
      else if (key == "aspects") n_aspects = value;
      else if (key == "user_set_len") bundle.sets.user_len = static_cast<int>(value);
      else if (key == "item_set_len") bundle.sets.item_len = static_cast<int>(value);
      else if (key == "records") n_records = value;
    }
  }

  bundle.users = read_lines(root / "users.txt");
  bundle.items = read_lines(root / "items.txt");
  bundle.vocab.aspects = read_lines(root / "vocab.txt");
  require(bundle.users.size() == n_users && bundle.items.size() == n_items,
          "bundle meta disagrees with users/items files");
  require(bundle.vocab.aspects.size() == n_aspects + 1 && bundle.vocab.aspects[0] == "<PAD>",
          "bundle vocab malformed");
  for (int i = 0; i < bundle.vocab.size(); ++i) bundle.vocab.index.emplace(bundle.vocab.aspects[i], i);

  for (const auto& l : read_lines(root / "records.tsv")) {
    std::istringstream iss(l);
    int u, v;
    std::string s;
    require(static_cast<bool>(iss >> u >> v >> s), "bad record line: " + l);
    bundle.records.emplace_back(u, v, s == "train" ? Split::train : Split::test);
  }
  require(bundle.records.size() == n_records, "bundle meta disagrees with records.tsv");

  auto load_sets = [&](const char* name, std::size_t rows) {
    auto lines = read_lines(root / name, /*header=*/true);
    require(lines.size() == rows, std::string(name) + ": unexpected row count");
    std::vector<std::vector<int>> out;
    out.reserve(rows);
    for (const auto& l : lines) out.push_back(split_ints(l));
    return out;
  };
  bundle.sets.user_sets = load_sets("user_sets.txt", n_users);
  bundle.sets.item_sets = load_sets("item_sets.txt", n_items);
  bundle.sets.raw_user_sets = load_sets("raw_user_sets.txt", n_users);
  bundle.sets.raw_item_sets = load_sets("raw_item_sets.txt", n_items);

  for (const auto& l : read_lines(root / "validation.tsv")) {
    std::istringstream iss(l);
    int u, v;
    require(static_cast<bool>(iss >> u >> v), "bad validation line: " + l);
    bundle.validation.entries.emplace_back(u, v);
  }

  bundle.corpus_lines = read_lines(root / "corpus.txt");
  return bundle;
}

}  // namespace aarm
