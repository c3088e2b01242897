#pragma once

#include <optional>
#include <span>
#include <vector>

#include "craft/types.hpp"

namespace craft {

enum class Role : std::uint8_t { kSource = 0, kDestination = 1 };

struct NeighborEvent {
  NodeId peer = 0;
  Timestamp t = 0;

  friend bool operator==(const NeighborEvent&, const NeighborEvent&) = default;
};

/// Immutable per-node temporal adjacency.
///
/// Three CSR layouts share the node offsets of their role:
///  - source-role events of each node sorted by (t, ord), used for recent-k
///    neighbor context;
///  - events of both roles sorted by (t, ord), used for last activity;
///  - source-role events re-sorted by (peer, t), used for prefix counting of
///    repeated (s, d) pairs.
/// Every query is a binary search over one node's slice.
class NeighborIndex {
 public:
  NeighborIndex() = default;

  /// Rejects unsorted input (first violating ordinal) and out-of-range ids.
  static NeighborIndex build(std::span<const TemporalEdge> edges,
                             const GraphMeta& meta);

  const GraphMeta& meta() const { return meta_; }
  std::size_t num_nodes() const { return meta_.num_nodes; }
  std::size_t num_edges() const { return num_edges_; }

  /// The k most recent source-role events of `node` strictly before `t`,
  /// oldest first.
  std::vector<NeighborEvent> recent_neighbors(NodeId node, Timestamp t,
                                              std::size_t k) const;

  /// Same as recent_neighbors but writes into caller storage; returns the
  /// number of events written (<= out.size()).
  std::size_t recent_neighbors_into(NodeId node, Timestamp t,
                                    std::span<NeighborEvent> out) const;

  /// Number of source-role events of `node` strictly before `t`.
  std::size_t history_size(NodeId node, Timestamp t) const;

  /// Latest event time strictly before `t` over both roles.
  std::optional<Timestamp> last_activity(NodeId node, Timestamp t) const;

  /// Directed count of edges (s -> d) with time strictly before `t`.
  std::size_t repeat_count(NodeId s, NodeId d, Timestamp t) const;

  /// True when an edge (s -> d) exists at exactly time `t`.
  bool has_edge_at(NodeId s, NodeId d, Timestamp t) const;

  /// Destinations of s at exactly time t (concurrent positives).
  std::vector<NodeId> destinations_at(NodeId s, Timestamp t) const;

  /// Full source-role event list of a node, sorted by (t, ord).
  std::vector<NeighborEvent> source_events(NodeId node) const;
  /// Full event list of a node over both roles, with roles.
  std::vector<std::pair<NeighborEvent, Role>> all_events(NodeId node) const;

  std::size_t out_degree(NodeId node) const {
    return out_offsets_[node + 1] - out_offsets_[node];
  }

 private:
  void check_node(NodeId node) const;

  GraphMeta meta_;
  std::size_t num_edges_ = 0;

  // Source-role events, sorted by (t, ord) within each node.
  std::vector<std::size_t> out_offsets_;
  std::vector<NodeId> out_peer_;
  std::vector<Timestamp> out_time_;

  // Both roles, sorted by (t, ord) within each node.
  std::vector<std::size_t> all_offsets_;
  std::vector<NodeId> all_peer_;
  std::vector<Timestamp> all_time_;
  std::vector<Role> all_role_;

  // Source-role events sorted by (peer, t); shares out_offsets_.
  std::vector<NodeId> pair_peer_;
  std::vector<Timestamp> pair_time_;
};

}  // namespace craft
