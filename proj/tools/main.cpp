#include "aarm/corpus.hpp"
#include "aarm/evaluation.hpp"
#include "aarm/introspection.hpp"
#include "aarm/model.hpp"
#include "aarm/pretrain.hpp"
#include "aarm/training.hpp"
#include "aarm/variants.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aarm;

namespace {

void log_line(const std::string& msg) { std::cerr << "[aarm] " << msg << "\n"; }

// config hash covers the semantic settings only: path-valued entries would
// break byte-identical reports across working directories
std::string config_hash(const std::map<std::string, std::string>& config) {
  static const std::set<std::string> path_keys = {"input",      "out",    "data", "ckpt",
                                                  "embeddings", "import", "config"};
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [k, v] : config) {
    if (path_keys.count(k)) continue;
    h = fnv1a(k + "=" + v + "\n", h);
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(const fs::path& where, const std::string& command,
                    const std::map<std::string, std::string>& config, std::uint64_t seed) {
  json manifest;
  manifest["command"] = command;
  manifest["config"] = config;
  manifest["config_hash"] = config_hash(config);
  manifest["seed"] = seed;
  manifest["tool_version"] = kVersion;
  manifest["formats"] = {{"data", kDataFormat},
                         {"checkpoint", kCheckpointFormat},
                         {"train_state", kTrainStateFormat}};
  std::ofstream out(where, std::ios::binary);
  require(out.good(), "cannot write manifest: " + where.string());
  out << manifest.dump(2) << "\n";
}

// effective option values of a parsed subcommand, for the manifest
std::map<std::string, std::string> collect_config(const CLI::App& app) {
  std::map<std::string, std::string> out;
  for (const auto* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    out[name] = value;
  }
  return out;
}

json report_to_json(const EvalReport& report, const DatasetBundle& bundle,
                    const std::string& hash) {
  json per_user = json::array();
  for (int i = 0; i < report.user_count(); ++i) {
    const auto& m = report.per_user[i];
    per_user.push_back({{"user", bundle.users[report.user_ids[i]]},
                        {"recall", m.recall},
                        {"precision", m.precision},
                        {"ndcg", m.ndcg},
                        {"hit", m.hit}});
  }
  return {{"top_n", report.top_n},
          {"users", report.user_count()},
          {"recall_percent", round_percent(report.recall)},
          {"precision_percent", round_percent(report.precision)},
          {"ndcg_percent", round_percent(report.ndcg)},
          {"hit_ratio_percent", round_percent(report.hit_ratio)},
          {"per_user", per_user},
          {"config_hash", hash}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Mat load_pretrained_matrix(const std::string& path, const AspectVocabulary& vocab, int dim) {
  auto table = load_embeddings(path, dim);
  return aspect_embedding_matrix(table, vocab);
}

struct TrainFlags {
  std::string data, embeddings, out;
  std::string variant = "aarm";
  std::string strategy = "pretrain_transform";
  std::string masking = "softmax_exclude";
  double lr = 0.003, l2 = 0.0001, dropout = 0.5;
  int batch = 512, epochs = 300, eval_every = 10, patience = 4, top_n = 10;
  int d_a = 128, d_g = 128, threads = 1;
  std::uint64_t seed = 1;
  bool resume = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_variant) {
  cmd->add_option("--data", f.data, "dataset bundle directory")->required();
  cmd->add_option("--embeddings", f.embeddings,
                  "pre-trained aspect vectors (pretrain_* strategies)");
  cmd->add_option("--out", f.out, "output directory")->required();
  if (with_variant) cmd->add_option("--variant", f.variant, "model variant tag");
  cmd->add_option("--strategy", f.strategy, "embedding strategy");
  cmd->add_option("--masking", f.masking, "softmax masking mode");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--l2", f.l2, "L2 regularization coefficient");
  cmd->add_option("--dropout", f.dropout, "dropout rate on the part outputs");
  cmd->add_option("--batch", f.batch, "mini-batch size");
  cmd->add_option("--epochs", f.epochs, "maximum training epochs");
  cmd->add_option("--eval-every", f.eval_every, "epochs between validation checkpoints");
  cmd->add_option("--patience", f.patience, "stalled checkpoints before stopping");
  cmd->add_option("--n", f.top_n, "validation cutoff N");
  cmd->add_option("--d-a", f.d_a, "aspect embedding dimension");
  cmd->add_option("--d-g", f.d_g, "global embedding dimension");
  cmd->add_option("--threads", f.threads, "worker threads");
  cmd->add_option("--seed", f.seed, "rng seed");
}

struct TrainedModel {
  ModelParams best;
  TrainHistory history;
};

TrainedModel run_training(const DatasetBundle& bundle, const TrainFlags& f, Variant variant,
                          const fs::path& out_dir, bool resume) {
  ModelConfig config;
  config.aspect_dim = f.d_a;
  config.global_dim = f.d_g;
  config.variant = variant;
  config.strategy = parse_strategy(f.strategy);
  config.masking = parse_masking(f.masking);
  config.dropout = f.dropout;

  Mat pretrained;
  const Mat* pretrained_ptr = nullptr;
  if (config.strategy != EmbeddingStrategy::random_tune) {
    require(!f.embeddings.empty(),
            "--embeddings is required for strategy " + to_string(config.strategy));
    pretrained = load_pretrained_matrix(f.embeddings, bundle.vocab, f.d_a);
    pretrained_ptr = &pretrained;
  }
  ModelParams params = init_params(config, bundle.user_count(), bundle.item_count(),
                                   bundle.vocab.size(), pretrained_ptr, f.seed);

  TrainConfig cfg;
  cfg.learning_rate = f.lr;
  cfg.lambda = f.l2;
  cfg.batch_size = f.batch;
  cfg.max_epochs = f.epochs;
  cfg.eval_every = f.eval_every;
  cfg.patience_checkpoints = f.patience;
  cfg.top_n = f.top_n;
  cfg.seed = f.seed;
  cfg.threads = f.threads;

  fs::create_directories(out_dir);
  std::ofstream train_log(out_dir / "train_log.jsonl", resume ? std::ios::app : std::ios::out);
  require(train_log.good(), "cannot write training log");
  auto logger = [&](const std::string& line) {
    train_log << line << "\n";
    train_log.flush();
    log_line(line);
  };

  auto result =
      train(bundle, std::move(params), cfg, (out_dir / "train.state").string(), resume, logger);
  return {std::move(result.best), std::move(result.history)};
}

json history_json(const TrainHistory& h) {
  json checkpoints = json::array();
  for (const auto& c : h.checkpoints)
    checkpoints.push_back({{"epoch", c.epoch},
                           {"recall_percent", round_percent(c.recall)},
                           {"precision_percent", round_percent(c.precision)},
                           {"ndcg_percent", round_percent(c.ndcg)},
                           {"hit_ratio_percent", round_percent(c.hit_ratio)}});
  return {{"epoch_loss", h.epoch_loss},
          {"checkpoints", checkpoints},
          {"stopping_epoch", h.stopping_epoch},
          {"best_checkpoint_epoch", h.best_checkpoint_epoch}};
}

int cmd_prepare(const CLI::App& cmd, const std::string& input, const std::string& out,
                const PrepareConfig& cfg) {
  log_line("loading " + input);
  auto bundle = prepare_dataset(input, cfg);
  log_line("users=" + std::to_string(bundle.user_count()) +
           " items=" + std::to_string(bundle.item_count()) +
           " aspects=" + std::to_string(bundle.vocab.aspect_count()) +
           " M_u=" + std::to_string(bundle.sets.user_len) +
           " M_v=" + std::to_string(bundle.sets.item_len));
  save_bundle(bundle, out);
  write_manifest(fs::path(out) / "manifest.json", "prepare", collect_config(cmd), cfg.seed);
  log_line("bundle written to " + out);
  return 0;
}

int cmd_pretrain(const CLI::App& cmd, const std::string& data, const std::string& out,
                 const std::string& import_path, const SgnsConfig& cfg) {
  auto bundle = load_bundle(data);
  EmbeddingTable table;
  if (!import_path.empty()) {
    log_line("importing vectors from " + import_path);
    table = load_embeddings(import_path, cfg.dim);
  } else {
    log_line("tokenizing " + std::to_string(bundle.corpus_lines.size()) + " train reviews");
    auto corpus = tokenize_reviews(bundle.corpus_lines, bundle.vocab);
    log_line("training skip-gram (dim=" + std::to_string(cfg.dim) + ")");
    table = train_sgns(corpus, bundle.vocab, cfg);
  }
  // coverage check against the bundle vocabulary fails fast, before saving
  aspect_embedding_matrix(table, bundle.vocab);
  save_embeddings(table, out);
  write_manifest(fs::path(out).string() + ".manifest.json", "pretrain", collect_config(cmd),
                 cfg.seed);
  log_line("vectors written to " + out);
  return 0;
}

int cmd_train(const CLI::App& cmd, const TrainFlags& f) {
  auto bundle = load_bundle(f.data);
  const fs::path out_dir(f.out);
  auto trained = run_training(bundle, f, parse_variant(f.variant), out_dir, f.resume);
  save_checkpoint(trained.best, (out_dir / "best.ckpt").string());
  write_json(out_dir / "history.json", history_json(trained.history));
  write_manifest(out_dir / "manifest.json", "train", collect_config(cmd), f.seed);
  log_line("best checkpoint (epoch " + std::to_string(trained.history.best_checkpoint_epoch) +
           ") written to " + (out_dir / "best.ckpt").string());
  return 0;
}

int cmd_evaluate(const CLI::App& cmd, const std::string& data, const std::string& ckpt,
                 const std::string& out, int n, int threads) {
  auto bundle = load_bundle(data);
  auto params = load_checkpoint(ckpt);
  validate_against_bundle(params, bundle);
  auto report = evaluate(params, bundle, n, threads);
  const auto hash = config_hash(collect_config(cmd));
  write_json(out, report_to_json(report, bundle, hash));
  write_manifest(out + ".manifest.json", "evaluate", collect_config(cmd), 0);
  log_line("NDCG=" + std::to_string(round_percent(report.ndcg)) +
           "% HT=" + std::to_string(round_percent(report.hit_ratio)) + "% over " +
           std::to_string(report.user_count()) + " users");
  return 0;
}

int cmd_ablate(const CLI::App& cmd, const TrainFlags& f, const std::string& variants_csv,
               int eval_n) {
  auto bundle = load_bundle(f.data);
  std::vector<Variant> variants;
  {
    std::string token;
    std::istringstream iss(variants_csv);
    while (std::getline(iss, token, ',')) variants.push_back(parse_variant(token));
  }
  require(!variants.empty(), "no variants requested");

  const fs::path out_dir(f.out);
  fs::create_directories(out_dir);
  std::map<std::string, EvalReport> reports;
  for (Variant v : variants) {
    log_line("=== training variant " + to_string(v) + " ===");
    const fs::path vdir = out_dir / to_string(v);
    auto trained = run_training(bundle, f, v, vdir, false);
    save_checkpoint(trained.best, (vdir / "best.ckpt").string());
    write_json(vdir / "history.json", history_json(trained.history));
    auto report = evaluate(trained.best, bundle, eval_n, f.threads);
    write_json(vdir / "report.json",
               report_to_json(report, bundle, config_hash(collect_config(cmd))));
    reports.emplace(to_string(v), report);
  }

  // comparison table: percentages plus improvements of aarm over each variant
  json comparison;
  std::string table = "Measures(%)\tNDCG\tHT\tRecall\tPrecision\n";
  auto row_of = [](const EvalReport& r) {
    return std::array<double, 4>{round_percent(r.ndcg), round_percent(r.hit_ratio),
                                 round_percent(r.recall), round_percent(r.precision)};
  };
  for (const auto& [name, report] : reports) {
    auto row = row_of(report);
    comparison[name] = {{"ndcg", row[0]},
                        {"hit_ratio", row[1]},
                        {"recall", row[2]},
                        {"precision", row[3]}};
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s\t%.3f\t%.3f\t%.3f\t%.3f\n", name.c_str(), row[0], row[1],
                  row[2], row[3]);
    table += buf;
  }
  if (reports.count("aarm")) {
    auto base = row_of(reports.at("aarm"));
    for (const auto& [name, report] : reports) {
      if (name == "aarm") continue;
      auto row = row_of(report);
      json impr;
      std::string line = "Impr " + name;
      const char* keys[] = {"ndcg", "hit_ratio", "recall", "precision"};
      for (int k = 0; k < 4; ++k) {
        if (row[k] > 0.0) {
          const double pct = std::round((base[k] - row[k]) / row[k] * 100.0 * 1000.0) / 1000.0;
          impr[keys[k]] = pct;
          char buf[32];
          std::snprintf(buf, sizeof(buf), "\t%.3f", pct);
          line += buf;
        } else {
          impr[keys[k]] = nullptr;
          line += "\tn/a";
        }
      }
      comparison["improvements_aarm_vs"][name] = impr;
      table += line + "\n";
    }
  }
  write_json(out_dir / "comparison.json", comparison);
  std::ofstream table_out(out_dir / "comparison.txt", std::ios::binary);
  table_out << table;
  std::cerr << table;
  write_manifest(out_dir / "manifest.json", "ablate", collect_config(cmd), f.seed);
  return 0;
}

int cmd_inspect(const CLI::App& cmd, const std::string& data, const std::string& ckpt,
                const std::string& user, const std::string& item, const std::string& out) {
  auto bundle = load_bundle(data);
  auto params = load_checkpoint(ckpt);
  auto dump = attention_trace(params, bundle, user, item);
  write_json(out, dump_to_json(dump));
  std::ofstream csv(out + ".csv", std::ios::binary);
  require(csv.good(), "cannot write heatmap csv");
  csv << dump_to_csv(dump);
  write_manifest(out + ".manifest.json", "inspect", collect_config(cmd), 0);
  log_line("attention dump written to " + out + " (+ .csv)");
  return 0;
}

int cmd_stats(const CLI::App& cmd, const std::string& data, const std::string& out,
              bool shared_aspects, bool truncated, long long sample, std::uint64_t seed) {
  require(shared_aspects, "stats currently supports --shared-aspects only");
  auto bundle = load_bundle(data);
  auto hist = shared_aspect_distribution(bundle, truncated, sample, seed);
  write_json(out, histogram_to_json(hist));
  write_manifest(out + ".manifest.json", "stats", collect_config(cmd), seed);
  log_line((hist.sampled ? std::string("sampled ") : std::string("exact ")) +
           std::to_string(hist.pairs) + " pairs; bucket-0 " +
           std::to_string(hist.ratios[0] * 100.0) + "%");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attentive aspect-based recommendation pipeline"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "flat key=value config: <subcommand>.<flag>=<value>");
  app.allow_config_extras(CLI::config_extras_mode::ignore_all);

  // prepare
  auto* prepare = app.add_subcommand("prepare", "build a dataset bundle from JSON lines");
  std::string prep_input, prep_out, aspects_from = "train";
  PrepareConfig prep_cfg;
  prepare->add_option("--input", prep_input, "JSON-lines interaction file")->required();
  prepare->add_option("--out", prep_out, "bundle output directory")->required();
  prepare->add_option("--ratio", prep_cfg.ratio, "per-user train fraction");
  prepare->add_option("--quantile", prep_cfg.quantile, "aspect-set length quantile");
  prepare->add_option("--validation-users", prep_cfg.validation_users, "validation user count");
  prepare->add_option("--aspects-from", aspects_from, "aspect source: train or all");
  prepare->add_option("--seed", prep_cfg.seed, "rng seed");

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "skip-gram aspect embedding pre-training");
  std::string pre_data, pre_out, pre_import;
  SgnsConfig pre_cfg;
  int pre_threads = 1;
  pretrain->add_option("--data", pre_data, "dataset bundle directory")->required();
  pretrain->add_option("--out", pre_out, "output vectors file")->required();
  pretrain->add_option("--import", pre_import, "import external vectors instead of training");
  pretrain->add_option("--dim", pre_cfg.dim, "embedding dimension");
  pretrain->add_option("--window", pre_cfg.window, "context window");
  pretrain->add_option("--negatives", pre_cfg.negatives, "negative samples per pair");
  pretrain->add_option("--epochs", pre_cfg.epochs, "training epochs");
  pretrain->add_option("--min-count", pre_cfg.min_count, "frequency floor for non-aspect tokens");
  pretrain->add_option("--threads", pre_threads, "worker threads (non-deterministic when > 1)");
  pretrain->add_option("--seed", pre_cfg.seed, "rng seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model variant");
  TrainFlags train_flags;
  add_train_flags(train_cmd, train_flags, /*with_variant=*/true);
  train_cmd->add_flag("--resume", train_flags.resume, "resume from the saved training state");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "top-N metrics on the test split");
  std::string eval_data, eval_ckpt, eval_out;
  int eval_n = 10, eval_threads = 1;
  eval_cmd->add_option("--data", eval_data, "dataset bundle directory")->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--out", eval_out, "report JSON path")->required();
  eval_cmd->add_option("--n", eval_n, "recommendation list cutoff");
  eval_cmd->add_option("--threads", eval_threads, "worker threads");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and compare variants");
  TrainFlags ablate_flags;
  std::string ablate_variants =
      "aarm,a_inter,no_aspect_att,a_static,no_user_att,global_only,aspect_only";
  int ablate_n = 10;
  add_train_flags(ablate, ablate_flags, /*with_variant=*/false);
  ablate->add_option("--variants", ablate_variants, "comma-separated variant tags");
  ablate->add_option("--eval-n", ablate_n, "evaluation cutoff");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "dump attention for a user/item pair");
  std::string ins_data, ins_ckpt, ins_user, ins_item, ins_out;
  inspect->add_option("--data", ins_data, "dataset bundle directory")->required();
  inspect->add_option("--ckpt", ins_ckpt, "model checkpoint")->required();
  inspect->add_option("--user", ins_user, "user id")->required();
  inspect->add_option("--item", ins_item, "item id")->required();
  inspect->add_option("--out", ins_out, "dump JSON path")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "dataset-level aspect statistics");
  std::string stats_data, stats_out;
  bool stats_shared = false, stats_truncated = false;
  long long stats_sample = 0;
  std::uint64_t stats_seed = 1;
  stats->add_option("--data", stats_data, "dataset bundle directory")->required();
  stats->add_option("--out", stats_out, "output JSON path")->required();
  stats->add_flag("--shared-aspects", stats_shared, "shared-aspect histogram");
  stats->add_flag("--truncated", stats_truncated, "count padded sets instead of raw sets");
  stats->add_option("--sample", stats_sample, "pair samples: 0 auto, -1 exact, >0 sample size");
  stats->add_option("--seed", stats_seed, "rng seed for sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code;
  }

  try {
    if (prepare->parsed()) {
      require(aspects_from == "train" || aspects_from == "all",
              "--aspects-from must be train or all");
      prep_cfg.aspects_from_train_only = aspects_from != "all";
      return cmd_prepare(*prepare, prep_input, prep_out, prep_cfg);
    }
    if (pretrain->parsed()) {
      pre_cfg.threads = pre_threads;
      return cmd_pretrain(*pretrain, pre_data, pre_out, pre_import, pre_cfg);
    }
    if (train_cmd->parsed()) return cmd_train(*train_cmd, train_flags);
    if (eval_cmd->parsed())
      return cmd_evaluate(*eval_cmd, eval_data, eval_ckpt, eval_out, eval_n, eval_threads);
    if (ablate->parsed()) return cmd_ablate(*ablate, ablate_flags, ablate_variants, ablate_n);
    if (inspect->parsed())
      return cmd_inspect(*inspect, ins_data, ins_ckpt, ins_user, ins_item, ins_out);
    if (stats->parsed())
      return cmd_stats(*stats, stats_data, stats_out, stats_shared, stats_truncated,
                       stats_sample, stats_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
