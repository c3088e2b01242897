#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "craft/dataprep.hpp"

namespace craft {

/// Records how a dataset was split so later commands reproduce it.
struct SplitManifest {
  SplitFractions fractions;
  SplitBoundaries bounds;
  std::string dataset_checksum;
  /// Times of the first validation and first test edge (0 when empty).
  Timestamp val_start_time = 0;
  Timestamp test_start_time = 0;

  friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

SplitManifest make_split_manifest(std::span<const TemporalEdge> edges, const SplitFractions& f,
                                  const std::string& dataset_checksum);
void write_split_manifest(const SplitManifest& m, const std::filesystem::path& path);
SplitManifest read_split_manifest(const std::filesystem::path& path);

/// Fixed validation and test ranking queries, keyed by seed and q.
struct NegativeCache {
  std::uint64_t seed = 0;
  std::size_t q = 0;
  std::string dataset_checksum;
  std::vector<RankingQuery> val;
  std::vector<RankingQuery> test;

  friend bool operator==(const NegativeCache&, const NegativeCache&) = default;
};

/// Draws validation negatives from Stream::kValNegatives and test negatives
/// from Stream::kTestNegatives.
NegativeCache make_negative_cache(const NeighborIndex& index, const EdgeSplit& split,
                                  std::uint64_t seed, std::size_t q,
                                  const std::string& dataset_checksum);

/// Binary layout (little-endian): "CRAFTNEG", u32 version, u64 seed, u32 q,
/// 64-byte hex checksum, u64 query count, then per query u8 phase, u32 s,
/// i64 t, u32 d_pos and q u32 negatives.
void write_negative_cache(const NegativeCache& cache, const std::filesystem::path& path);
NegativeCache read_negative_cache(const std::filesystem::path& path);

}  // namespace craft
