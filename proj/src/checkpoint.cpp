#include "aarm/model.hpp"

#include <json.hpp>

#include <fstream>

namespace aarm {

using nlohmann::json;

namespace {

struct MatrixRef {
  const char* name;
  const double* data;
  Eigen::Index rows;
  Eigen::Index cols;
};

std::vector<MatrixRef> matrix_directory(const ModelParams& p) {
  return {
      {"aspect_embeddings", p.aspect_embeddings.data(), p.aspect_embeddings.rows(), p.aspect_embeddings.cols()},
      {"transform", p.transform.data(), p.transform.rows(), p.transform.cols()},
      {"aspect_att", p.aspect_att.data(), p.aspect_att.size(), 1},
      {"user_att", p.user_att.data(), p.user_att.size(), 1},
      {"user_factors", p.user_factors.data(), p.user_factors.rows(), p.user_factors.cols()},
      {"item_factors", p.item_factors.data(), p.item_factors.rows(), p.item_factors.cols()},
      {"output_weights", p.output_weights.data(), p.output_weights.size(), 1},
  };
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write checkpoint: " + path);

  json header;
  header["config"] = {
      {"aspect_dim", params.config.aspect_dim},   {"global_dim", params.config.global_dim},
      {"variant", to_string(params.config.variant)}, {"strategy", to_string(params.config.strategy)},
      {"masking", to_string(params.config.masking)}, {"dropout", params.config.dropout},
  };
  json dir = json::array();
  for (const auto& m : matrix_directory(params))
    dir.push_back({{"name", m.name}, {"rows", m.rows}, {"cols", m.cols}, {"elem_bytes", 8}});
  header["matrices"] = dir;

  out << kCheckpointFormat << '\n' << header.dump() << '\n';
  for (const auto& m : matrix_directory(params))
    out.write(reinterpret_cast<const char*>(m.data),
              static_cast<std::streamsize>(sizeof(double) * m.rows * m.cols));
  require(out.good(), "short write on checkpoint: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read checkpoint: " + path);

  std::string magic, header_line;
  require(static_cast<bool>(std::getline(in, magic)) && magic == kCheckpointFormat,
          path + ": not a checkpoint (bad magic)");
  require(static_cast<bool>(std::getline(in, header_line)), path + ": truncated header");
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    fail(path + ": bad checkpoint header: " + e.what());
  }

  ModelParams p;
  const auto& cfg = header.at("config");
  p.config.aspect_dim = cfg.at("aspect_dim").get<int>();
  p.config.global_dim = cfg.at("global_dim").get<int>();
  p.config.variant = parse_variant(cfg.at("variant").get<std::string>());
  p.config.strategy = parse_strategy(cfg.at("strategy").get<std::string>());
  p.config.masking = parse_masking(cfg.at("masking").get<std::string>());
  p.config.dropout = cfg.at("dropout").get<double>();

  auto read_matrix = [&](const json& meta, double* data, Eigen::Index n) {
    require(meta.at("elem_bytes").get<int>() == 8, path + ": unsupported element width");
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(sizeof(double) * n));
    require(in.gcount() == static_cast<std::streamsize>(sizeof(double) * n),
            path + ": truncated matrix payload");
  };
  for (const auto& meta : header.at("matrices")) {
    const auto name = meta.at("name").get<std::string>();
    const auto rows = meta.at("rows").get<Eigen::Index>();
    const auto cols = meta.at("cols").get<Eigen::Index>();
    if (name == "aspect_embeddings") {
      p.aspect_embeddings.resize(rows, cols);
      read_matrix(meta, p.aspect_embeddings.data(), rows * cols);
    } else if (name == "transform") {
      p.transform.resize(rows, cols);
      read_matrix(meta, p.transform.data(), rows * cols);
    } else if (name == "aspect_att") {
      p.aspect_att.resize(rows);
      read_matrix(meta, p.aspect_att.data(), rows);
    } else if (name == "user_att") {
      p.user_att.resize(rows);
      read_matrix(meta, p.user_att.data(), rows);
    } else if (name == "user_factors") {
      p.user_factors.resize(rows, cols);
      read_matrix(meta, p.user_factors.data(), rows * cols);
    } else if (name == "item_factors") {
      p.item_factors.resize(rows, cols);
      read_matrix(meta, p.item_factors.data(), rows * cols);
    } else if (name == "output_weights") {
      p.output_weights.resize(rows);
      read_matrix(meta, p.output_weights.data(), rows);
    } else {
      fail(path + ": unknown matrix '" + name + "'");
    }
  }

  require(p.aspect_embeddings.size() > 0 && p.transform.rows() == p.config.aspect_dim,
          path + ": incomplete checkpoint");
  require(p.output_weights.size() == p.config.output_dim(),
          path + ": output weights inconsistent with variant");
  return p;
}

void validate_against_bundle(const ModelParams& params, const DatasetBundle& bundle) {
  require(params.vocab_size() == bundle.vocab.size(),
          "checkpoint aspect vocabulary size " + std::to_string(params.vocab_size()) +
              " != bundle " + std::to_string(bundle.vocab.size()));
  require(params.user_count() == bundle.user_count(),
          "checkpoint user count " + std::to_string(params.user_count()) + " != bundle " +
              std::to_string(bundle.user_count()));
  require(params.item_count() == bundle.item_count(),
          "checkpoint item count " + std::to_string(params.item_count()) + " != bundle " +
              std::to_string(bundle.item_count()));
}

}  // namespace aarm
