#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craft/dataprep.hpp"
#include "craft/model.hpp"
#include "craft/optim.hpp"

namespace craft {

enum class Precision : std::uint8_t { kSingle = 0, kDouble = 1 };

/// Everything a training or evaluation run depends on.
struct RunConfig {
  /// Bundle directory produced by `ingest`.
  std::filesystem::path dataset;
  SplitFractions split;
  /// num_nodes is filled from the bundle at launch.
  ModelConfig model;
  nn::AdamSettings adam;
  LossKind loss = LossKind::kBpr;
  std::uint64_t seed = 0;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t batch_size = 200;
  std::size_t eval_batch_size = 200;
  std::size_t q_eval = 100;
  std::filesystem::path out;
  Precision precision = Precision::kSingle;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// SHA-256 over the canonical JSON with the output directory left out.
  std::string fingerprint() const;
};

/// Reads a config file; keys missing from it keep their defaults.
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies `key=value` overrides where key is a JSON pointer without the
/// leading slash (e.g. `model/k=20`). Values parse as JSON when possible and
/// as strings otherwise.
RunConfig apply_overrides(const RunConfig& base, const std::vector<std::string>& overrides);

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

}  // namespace craft
