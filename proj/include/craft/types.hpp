#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace craft {

using NodeId = std::uint32_t;
using Timestamp = std::int64_t;
using Ordinal = std::uint64_t;

/// One directed interaction. `ord` is the position in the time-sorted input.
struct TemporalEdge {
  NodeId src = 0;
  NodeId dst = 0;
  Timestamp t = 0;
  Ordinal ord = 0;

  friend bool operator==(const TemporalEdge&, const TemporalEdge&) = default;
};

/// Node layout of a dataset. For bipartite graphs sources occupy
/// [0, num_sources) and destinations [num_sources, num_nodes).
struct GraphMeta {
  std::size_t num_nodes = 0;
  bool bipartite = false;
  std::size_t num_sources = 0;

  std::size_t num_destinations() const {
    return bipartite ? num_nodes - num_sources : num_nodes;
  }
  bool is_destination(NodeId n) const {
    return n < num_nodes && (!bipartite || n >= num_sources);
  }
};

/// Raised for malformed input data (edge files, bundles, caches).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a source has no history before the query time.
class ColdSourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace craft
