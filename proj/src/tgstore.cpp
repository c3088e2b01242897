#include "craft/tgstore.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace craft {

namespace {

std::vector<std::size_t> prefix_offsets(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> offsets(counts.size() + 1, 0);
  std::partial_sum(counts.begin(), counts.end(), offsets.begin() + 1);
  return offsets;
}

}  // namespace

NeighborIndex NeighborIndex::build(std::span<const TemporalEdge> edges,
                                   const GraphMeta& meta) {
  const std::size_t n = meta.num_nodes;
  if (meta.bipartite && meta.num_sources > n) {
    throw DataError("bipartite meta declares more sources than nodes");
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.src >= n || e.dst >= n) {
      throw DataError("edge ordinal " + std::to_string(e.ord) +
                      ": node id out of range (node count " +
                      std::to_string(n) + ")");
    }
    if (meta.bipartite && (e.src >= meta.num_sources || e.dst < meta.num_sources)) {
      throw DataError("edge ordinal " + std::to_string(e.ord) +
                      ": endpoint outside its bipartite partition");
    }
    if (i > 0) {
      const auto& p = edges[i - 1];
      if (e.t < p.t || (e.t == p.t && e.ord <= p.ord)) {
        throw DataError("edges not sorted by (t, ord) at ordinal " +
                        std::to_string(e.ord));
      }
    }
  }

  NeighborIndex idx;
  idx.meta_ = meta;
  idx.num_edges_ = edges.size();

  std::vector<std::size_t> out_count(n, 0);
  std::vector<std::size_t> all_count(n, 0);
  for (const auto& e : edges) {
    ++out_count[e.src];
    ++all_count[e.src];
    ++all_count[e.dst];
  }
  idx.out_offsets_ = prefix_offsets(out_count);
  idx.all_offsets_ = prefix_offsets(all_count);

  const std::size_t m = edges.size();
  idx.out_peer_.resize(m);
  idx.out_time_.resize(m);
  idx.all_peer_.resize(2 * m);
  idx.all_time_.resize(2 * m);
  idx.all_role_.resize(2 * m);

  // Input order is (t, ord), so bucket appends keep each slice sorted.
  std::vector<std::size_t> out_cursor(idx.out_offsets_.begin(), idx.out_offsets_.end() - 1);
  std::vector<std::size_t> all_cursor(idx.all_offsets_.begin(), idx.all_offsets_.end() - 1);
  for (const auto& e : edges) {
    const std::size_t o = out_cursor[e.src]++;
    idx.out_peer_[o] = e.dst;
    idx.out_time_[o] = e.t;

    const std::size_t a = all_cursor[e.src]++;
    idx.all_peer_[a] = e.dst;
    idx.all_time_[a] = e.t;
    idx.all_role_[a] = Role::kSource;

    const std::size_t b = all_cursor[e.dst]++;
    idx.all_peer_[b] = e.src;
    idx.all_time_[b] = e.t;
    idx.all_role_[b] = Role::kDestination;
  }

  idx.pair_peer_ = idx.out_peer_;
  idx.pair_time_ = idx.out_time_;
  std::vector<std::pair<NodeId, Timestamp>> scratch;
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t lo = idx.out_offsets_[v];
    const std::size_t hi = idx.out_offsets_[v + 1];
    scratch.clear();
    for (std::size_t i = lo; i < hi; ++i) {
      scratch.emplace_back(idx.out_peer_[i], idx.out_time_[i]);
    }
    std::stable_sort(scratch.begin(), scratch.end());
    for (std::size_t i = lo; i < hi; ++i) {
      idx.pair_peer_[i] = scratch[i - lo].first;
      idx.pair_time_[i] = scratch[i - lo].second;
    }
  }
  return idx;
}

void NeighborIndex::check_node(NodeId node) const {
  if (node >= meta_.num_nodes) {
    throw std::out_of_range("node id " + std::to_string(node) +
                            " out of range (node count " +
                            std::to_string(meta_.num_nodes) + ")");
  }
}

std::size_t NeighborIndex::history_size(NodeId node, Timestamp t) const {
  check_node(node);
  const auto first = out_time_.begin() + static_cast<std::ptrdiff_t>(out_offsets_[node]);
  const auto last = out_time_.begin() + static_cast<std::ptrdiff_t>(out_offsets_[node + 1]);
  return static_cast<std::size_t>(std::lower_bound(first, last, t) - first);
}

std::size_t NeighborIndex::recent_neighbors_into(NodeId node, Timestamp t,
                                                 std::span<NeighborEvent> out) const {
  const std::size_t cut = out_offsets_[node] + history_size(node, t);
  const std::size_t count = std::min(out.size(), cut - out_offsets_[node]);
  const std::size_t begin = cut - count;
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = NeighborEvent{out_peer_[begin + i], out_time_[begin + i]};
  }
  return count;
}

std::vector<NeighborEvent> NeighborIndex::recent_neighbors(NodeId node, Timestamp t,
                                                           std::size_t k) const {
  std::vector<NeighborEvent> out(k);
  out.resize(recent_neighbors_into(node, t, out));
  return out;
}

std::optional<Timestamp> NeighborIndex::last_activity(NodeId node, Timestamp t) const {
  check_node(node);
  const auto first = all_time_.begin() + static_cast<std::ptrdiff_t>(all_offsets_[node]);
  const auto last = all_time_.begin() + static_cast<std::ptrdiff_t>(all_offsets_[node + 1]);
  const auto cut = std::lower_bound(first, last, t);
  if (cut == first) {
    return std::nullopt;
  }
  return *(cut - 1);
}

std::size_t NeighborIndex::repeat_count(NodeId s, NodeId d, Timestamp t) const {
  check_node(s);
  const std::size_t lo = out_offsets_[s];
  const std::size_t hi = out_offsets_[s + 1];
  const auto peer_first = pair_peer_.begin() + static_cast<std::ptrdiff_t>(lo);
  const auto peer_last = pair_peer_.begin() + static_cast<std::ptrdiff_t>(hi);
  const auto [pb, pe] = std::equal_range(peer_first, peer_last, d);
  const auto tb = pair_time_.begin() + (pb - pair_peer_.begin());
  const auto te = pair_time_.begin() + (pe - pair_peer_.begin());
  return static_cast<std::size_t>(std::lower_bound(tb, te, t) - tb);
}

bool NeighborIndex::has_edge_at(NodeId s, NodeId d, Timestamp t) const {
  check_node(s);
  const std::size_t lo = out_offsets_[s];
  const std::size_t hi = out_offsets_[s + 1];
  const auto peer_first = pair_peer_.begin() + static_cast<std::ptrdiff_t>(lo);
  const auto peer_last = pair_peer_.begin() + static_cast<std::ptrdiff_t>(hi);
  const auto [pb, pe] = std::equal_range(peer_first, peer_last, d);
  const auto tb = pair_time_.begin() + (pb - pair_peer_.begin());
  const auto te = pair_time_.begin() + (pe - pair_peer_.begin());
  return std::binary_search(tb, te, t);
}

std::vector<NodeId> NeighborIndex::destinations_at(NodeId s, Timestamp t) const {
  check_node(s);
  const auto first = out_time_.begin() + static_cast<std::ptrdiff_t>(out_offsets_[s]);
  const auto last = out_time_.begin() + static_cast<std::ptrdiff_t>(out_offsets_[s + 1]);
  const auto [b, e] = std::equal_range(first, last, t);
  std::vector<NodeId> out;
  for (auto it = b; it != e; ++it) {
    out.push_back(out_peer_[static_cast<std::size_t>(it - out_time_.begin())]);
  }
  return out;
}

std::vector<NeighborEvent> NeighborIndex::source_events(NodeId node) const {
  check_node(node);
  std::vector<NeighborEvent> out;
  for (std::size_t i = out_offsets_[node]; i < out_offsets_[node + 1]; ++i) {
    out.push_back({out_peer_[i], out_time_[i]});
  }
  return out;
}

std::vector<std::pair<NeighborEvent, Role>> NeighborIndex::all_events(NodeId node) const {
  check_node(node);
  std::vector<std::pair<NeighborEvent, Role>> out;
  for (std::size_t i = all_offsets_[node]; i < all_offsets_[node + 1]; ++i) {
    out.push_back({{all_peer_[i], all_time_[i]}, all_role_[i]});
  }
  return out;
}

}  // namespace craft
