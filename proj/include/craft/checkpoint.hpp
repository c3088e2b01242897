#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "craft/model.hpp"

namespace craft {

/// Header of a checkpoint container.
///
/// Layout: "CRAFTCKP", u32 version, u64 header length, the JSON header,
/// then the raw little-endian parameter arrays at the offsets the header
/// lists (relative to the end of the header).
struct CheckpointInfo {
  /// Run configuration without the output directory.
  nlohmann::json config;
  ModelConfig model;
  std::string fingerprint;
  std::string dataset_checksum;
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  /// "float32" or "float64".
  std::string dtype;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const CraftModel<T>& model,
                     const CheckpointInfo& info);

/// Reads only the header.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores a model; the stored dtype must match T.
template <typename T>
CraftModel<T> load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace craft
