#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "craft/types.hpp"

namespace craft {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// Contents of the meta sidecar that accompanies a raw edge file.
struct EdgeFileMeta {
  bool bipartite = false;
  /// When present, must equal the number of distinct ids observed.
  std::optional<std::size_t> num_sources;
  std::optional<std::size_t> num_destinations;
  std::optional<std::size_t> num_nodes;
};

EdgeFileMeta read_edge_file_meta(const std::filesystem::path& path);

/// A validated dataset with dense node ids.
struct Dataset {
  GraphMeta meta;
  std::vector<TemporalEdge> edges;
  /// original_ids[dense] is the id as spelled in the source file.
  std::vector<std::string> original_ids;
  /// SHA-256 of the canonical edges.csv bytes.
  std::string checksum;
};

/// Parses `src,dst,t` records (whitespace-separated records are accepted
/// too). An optional header line is skipped, as are blank lines and lines
/// starting with '#'. Node ids are arbitrary strings remapped densely in
/// order of first appearance. Throws DataError naming the line number for a
/// malformed record and the ordinal for a timestamp regression.
Dataset parse_edges(std::istream& in, const EdgeFileMeta& meta);

Dataset ingest_edge_file(const std::filesystem::path& edge_file,
                         const std::filesystem::path& meta_file);

/// Canonical `src,dst,t` text of the dense edge list.
std::string canonical_edges_csv(const std::vector<TemporalEdge>& edges);

/// Writes edges.csv, nodes.csv and manifest.json into `dir`. The output
/// depends only on the dataset, so re-ingesting yields identical bytes.
void write_bundle(const Dataset& data, const std::filesystem::path& dir);

/// Loads a bundle and verifies its checksum.
Dataset load_bundle(const std::filesystem::path& dir);

}  // namespace craft
