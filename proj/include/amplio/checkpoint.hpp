#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "amplio/concepts.hpp"
#include "amplio/sae.hpp"

namespace amplio {

inline constexpr const char* kCheckpointVersion = "gated-sae/1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

/// A trained SAE together with its concept dictionary.
struct ConceptModel {
  GatedSAEParams params;
  ConceptDictionary dictionary;
  SAETrainConfig config;
  SAETrainReport report;
};

inline nlohmann::json train_config_json(const SAETrainConfig& c) {
  return {{"features", c.features},         {"sparsity_weight", c.sparsity_weight}, {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},               {"beta2", c.beta2},                     {"epochs", c.epochs},
          {"batch_size", c.batch_size},     {"warmup_fraction", c.warmup_fraction}, {"seed", c.seed}};
}

inline SAETrainConfig train_config_from_json(const nlohmann::json& j) {
  SAETrainConfig c;
  c.features = j.value("features", c.features);
  c.sparsity_weight = j.value("sparsity_weight", c.sparsity_weight);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace detail {

inline void write_row_major(std::ostream& out, const Matrix& m) {
  const RowMatrix rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

inline Matrix read_row_major(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  RowMatrix rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!in) fail(ErrorCode::IoError, "truncated SAE checkpoint");
  return rm;
}

}  // namespace detail

/// Layout: "gated-sae/1\n", one JSON header line (dims, config, report), then
/// little-endian float64 arrays in row-major order:
/// W_gate (F x d), b_gate, r_mag, b_mag, W_dec (d x F), b_dec.
inline void save_checkpoint(const std::filesystem::path& path, const GatedSAEParams& p, const SAETrainConfig& config,
                            const SAETrainReport& report = {}) {
  p.validate();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string(), tmp.string());
    nlohmann::json header = {{"d", p.d()},
                             {"features", p.features()},
                             {"config", train_config_json(config)},
                             {"epoch_loss", report.epoch_loss},
                             {"dead_features", report.dead_features},
                             {"mean_l0", report.mean_l0},
                             {"arrays", {"w_gate", "b_gate", "r_mag", "b_mag", "w_dec", "b_dec"}}};
    out << kCheckpointVersion << '\n' << header.dump() << '\n';
    detail::write_row_major(out, p.w_gate);
    detail::write_row_major(out, p.b_gate);
    detail::write_row_major(out, p.r_mag);
    detail::write_row_major(out, p.b_mag);
    detail::write_row_major(out, p.w_dec);
    detail::write_row_major(out, p.b_dec);
    if (!out) fail(ErrorCode::IoError, "failed writing " + tmp.string(), tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  GatedSAEParams params;
  SAETrainConfig config;
  SAETrainReport report;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  std::string tag, header_line;
  std::getline(in, tag);
  if (tag != kCheckpointVersion) fail(ErrorCode::IoError, "unsupported checkpoint version '" + tag + "'", path.string());
  std::getline(in, header_line);
  const auto header = nlohmann::json::parse(header_line);
  const auto d = header.at("d").get<Eigen::Index>();
  const auto f = header.at("features").get<Eigen::Index>();
  LoadedCheckpoint c;
  c.config = train_config_from_json(header.at("config"));
  c.report.epoch_loss = header.value("epoch_loss", std::vector<double>{});
  c.report.dead_features = header.value("dead_features", std::vector<int>{});
  c.report.mean_l0 = header.value("mean_l0", 0.0);
  c.params.w_gate = detail::read_row_major(in, f, d);
  c.params.b_gate = detail::read_row_major(in, f, 1);
  c.params.r_mag = detail::read_row_major(in, f, 1);
  c.params.b_mag = detail::read_row_major(in, f, 1);
  c.params.w_dec = detail::read_row_major(in, d, f);
  c.params.b_dec = detail::read_row_major(in, d, 1);
  c.params.validate();
  return c;
}

inline nlohmann::json labels_json(const ConceptDictionary& dict) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : dict.concepts()) {
    arr.push_back({{"index", c.index},
                   {"label", c.label},
                   {"weak", c.weak},
                   {"unlabeled", c.unlabeled},
                   {"top_examples", c.top_examples}});
  }
  return {{"version", kCheckpointVersion}, {"concepts", arr}};
}

inline void apply_labels(ConceptDictionary& dict, const nlohmann::json& j) {
  for (const auto& e : j.at("concepts")) {
    auto& c = dict.at(e.at("index").get<int>());
    c.label = e.value("label", std::string(kUnlabeled));
    c.weak = e.value("weak", false);
    c.unlabeled = e.value("unlabeled", c.label == kUnlabeled);
    c.top_examples = e.value("top_examples", std::vector<SentenceId>{});
  }
}

inline void save_labels(const std::filesystem::path& path, const ConceptDictionary& dict) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string(), tmp.string());
    out << labels_json(dict).dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

inline void load_labels(const std::filesystem::path& path, ConceptDictionary& dict) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string(), path.string());
  apply_labels(dict, nlohmann::json::parse(in));
}

}  // namespace amplio
