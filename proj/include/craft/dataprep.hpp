#pragma once

#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "craft/tgstore.hpp"

namespace craft {

using Rng = std::mt19937_64;

/// Independent stream keyed by (seed, keys...). Distinct key tuples give
/// decorrelated streams; identical tuples give identical streams.
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {});

/// Stream tags used when deriving per-purpose generators.
enum class Stream : std::uint64_t {
  kInit = 1,
  kTrainNegatives = 2,
  kShuffle = 3,
  kDropout = 4,
  kValNegatives = 5,
  kTestNegatives = 6,
};

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

/// Ordinal boundaries: train = [0, train_end), val = [train_end, val_end),
/// test = [val_end, total).
struct SplitBoundaries {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t total = 0;

  friend bool operator==(const SplitBoundaries&, const SplitBoundaries&) = default;
};

/// floor(fraction * m) edges for train and validation; the remainder goes to
/// test. Rejects non-positive fractions and sums away from 1 by > 1e-9.
SplitBoundaries split_boundaries(std::size_t m, const SplitFractions& f);

struct EdgeSplit {
  std::vector<TemporalEdge> train;
  std::vector<TemporalEdge> val;
  std::vector<TemporalEdge> test;
  SplitBoundaries bounds;
};

EdgeSplit chronological_split(std::span<const TemporalEdge> edges, const SplitFractions& f);

enum class Phase : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

struct RankingQuery {
  NodeId s = 0;
  Timestamp t = 0;
  NodeId d_pos = 0;
  std::vector<NodeId> negatives;
  Phase phase = Phase::kTrain;

  friend bool operator==(const RankingQuery&, const RankingQuery&) = default;
};

struct TrainingPair {
  NodeId s = 0;
  Timestamp t = 0;
  NodeId d_pos = 0;
  NodeId d_neg = 0;

  friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

/// Draws q distinct negatives uniformly from the destination pool, excluding
/// d_pos and every node with a positive edge from s at exactly t. The pool is
/// the destination partition for bipartite graphs and every node except s
/// otherwise. Throws DataError when fewer than q candidates remain.
std::vector<NodeId> sample_negatives(Rng& rng, const NeighborIndex& index, NodeId s,
                                     Timestamp t, NodeId d_pos, std::size_t q);

/// One collision-checked negative per training edge.
std::vector<TrainingPair> make_training_pairs(Rng& rng, std::span<const TemporalEdge> train,
                                              const NeighborIndex& index);

void shuffle_training(Rng& rng, std::vector<TrainingPair>& pairs);

/// Fixed ranking queries with q negatives each, in edge order.
std::vector<RankingQuery> make_eval_queries(Rng& rng, std::span<const TemporalEdge> edges,
                                            const NeighborIndex& index, std::size_t q,
                                            Phase phase);

/// True when s has no source-role event strictly before t.
inline bool is_cold_source(const NeighborIndex& index, NodeId s, Timestamp t) {
  return index.history_size(s, t) == 0;
}

/// Gathered model inputs for a set of queries sharing one candidate count.
/// Neighbor slots are ordered oldest to newest and left-padded, so the most
/// recent neighbor always sits in slot k - 1.
struct QueryBatch {
  std::size_t size = 0;
  std::size_t k = 0;
  std::size_t num_candidates = 0;
  /// Reserved id of the zero padding embedding (the node count).
  std::int64_t padding_id = 0;

  std::vector<NodeId> sources;
  std::vector<Timestamp> times;
  /// size x num_candidates; column 0 is the positive destination.
  std::vector<NodeId> candidates;
  /// size x k
  std::vector<std::int64_t> neighbor_ids;
  /// size x k; 1 exactly where the slot is padding.
  std::vector<std::uint8_t> neighbor_mask;
  /// size x k; 0 in padded slots.
  std::vector<Timestamp> neighbor_times;
  /// Real neighbors per query.
  std::vector<std::size_t> history;
  /// size x num_candidates: t - last_activity(candidate), 0 when never active.
  std::vector<double> delta_t;
  /// size x num_candidates: 1 when the candidate has no activity before t.
  std::vector<std::uint8_t> never_active;
  /// size x num_candidates directed (s, candidate) counts; empty unless
  /// requested.
  std::vector<double> repeat_counts;
};

QueryBatch assemble_batch(const NeighborIndex& index, std::span<const RankingQuery> queries,
                          std::size_t k, bool with_repeat);
QueryBatch assemble_batch(const NeighborIndex& index, std::span<const TrainingPair> pairs,
                          std::size_t k, bool with_repeat);

}  // namespace craft
