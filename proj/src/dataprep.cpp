#include "craft/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace craft {

Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (keys.size() + 1));
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto k : keys) push(k);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

SplitBoundaries split_boundaries(std::size_t m, const SplitFractions& f) {
  if (f.train <= 0.0 || f.val <= 0.0 || f.test <= 0.0) {
    throw std::invalid_argument("split fractions must all be positive");
  }
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split fractions must sum to 1");
  }
  // The 1e-9 guard keeps e.g. 0.7 * 10 from flooring to 6.
  const auto part = [m](double frac) {
    return static_cast<std::size_t>(std::floor(frac * static_cast<double>(m) + 1e-9));
  };
  SplitBoundaries b;
  b.total = m;
  b.train_end = std::min(part(f.train), m);
  b.val_end = std::min(b.train_end + part(f.val), m);
  return b;
}

EdgeSplit chronological_split(std::span<const TemporalEdge> edges, const SplitFractions& f) {
  EdgeSplit out;
  out.bounds = split_boundaries(edges.size(), f);
  out.train.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(out.bounds.train_end));
  out.val.assign(edges.begin() + static_cast<std::ptrdiff_t>(out.bounds.train_end),
                 edges.begin() + static_cast<std::ptrdiff_t>(out.bounds.val_end));
  out.test.assign(edges.begin() + static_cast<std::ptrdiff_t>(out.bounds.val_end), edges.end());
  return out;
}

std::vector<NodeId> sample_negatives(Rng& rng, const NeighborIndex& index, NodeId s,
                                     Timestamp t, NodeId d_pos, std::size_t q) {
  const GraphMeta& meta = index.meta();
  const NodeId pool_begin = meta.bipartite ? static_cast<NodeId>(meta.num_sources) : 0;
  const NodeId pool_end = static_cast<NodeId>(meta.num_nodes);
  const auto in_pool = [&](NodeId n) { return n >= pool_begin && n < pool_end; };

  std::vector<NodeId> excluded = index.destinations_at(s, t);
  excluded.push_back(d_pos);
  if (!meta.bipartite) excluded.push_back(s);
  std::sort(excluded.begin(), excluded.end());
  excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());
  const auto n_excluded = static_cast<std::size_t>(
      std::count_if(excluded.begin(), excluded.end(), in_pool));

  const std::size_t pool_size = pool_end - pool_begin;
  const std::size_t available = pool_size - n_excluded;
  if (available < q) {
    throw DataError("negative pool exhausted for query (s=" + std::to_string(s) +
                    ", t=" + std::to_string(t) + "): " + std::to_string(available) +
                    " candidates for " + std::to_string(q) + " negatives");
  }
  const auto is_excluded = [&excluded](NodeId n) {
    return std::binary_search(excluded.begin(), excluded.end(), n);
  };

  std::vector<NodeId> out;
  out.reserve(q);
  if (2 * q <= available) {
    std::uniform_int_distribution<std::size_t> pick(0, pool_size - 1);
    std::unordered_set<NodeId> chosen;
    while (out.size() < q) {
      const NodeId n = pool_begin + static_cast<NodeId>(pick(rng));
      if (is_excluded(n) || !chosen.insert(n).second) continue;
      out.push_back(n);
    }
    return out;
  }
  std::vector<NodeId> candidates;
  candidates.reserve(available);
  for (NodeId n = pool_begin; n < pool_end; ++n) {
    if (!is_excluded(n)) candidates.push_back(n);
  }
  for (std::size_t i = 0; i < q; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
    out.push_back(candidates[i]);
  }
  return out;
}

std::vector<TrainingPair> make_training_pairs(Rng& rng, std::span<const TemporalEdge> train,
                                              const NeighborIndex& index) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(train.size());
  for (const auto& e : train) {
    const auto neg = sample_negatives(rng, index, e.src, e.t, e.dst, 1);
    pairs.push_back({e.src, e.t, e.dst, neg.front()});
  }
  return pairs;
}

void shuffle_training(Rng& rng, std::vector<TrainingPair>& pairs) {
  std::shuffle(pairs.begin(), pairs.end(), rng);
}

std::vector<RankingQuery> make_eval_queries(Rng& rng, std::span<const TemporalEdge> edges,
                                            const NeighborIndex& index, std::size_t q,
                                            Phase phase) {
  std::vector<RankingQuery> out;
  out.reserve(edges.size());
  for (const auto& e : edges) {
    out.push_back({e.src, e.t, e.dst, sample_negatives(rng, index, e.src, e.t, e.dst, q), phase});
  }
  return out;
}

namespace {

template <typename Item, typename CandidatesOf>
QueryBatch assemble(const NeighborIndex& index, std::span<const Item> items, std::size_t k,
                    bool with_repeat, std::size_t num_candidates, CandidatesOf candidates_of) {
  if (items.empty()) {
    throw std::invalid_argument("assemble_batch: no queries");
  }
  if (k == 0) {
    throw std::invalid_argument("assemble_batch: k must be at least 1");
  }
  QueryBatch b;
  b.size = items.size();
  b.k = k;
  b.num_candidates = num_candidates;
  b.padding_id = static_cast<std::int64_t>(index.num_nodes());
  b.sources.resize(b.size);
  b.times.resize(b.size);
  b.candidates.resize(b.size * num_candidates);
  b.neighbor_ids.assign(b.size * k, b.padding_id);
  b.neighbor_mask.assign(b.size * k, 1);
  b.neighbor_times.assign(b.size * k, 0);
  b.history.resize(b.size);
  b.delta_t.assign(b.size * num_candidates, 0.0);
  b.never_active.assign(b.size * num_candidates, 0);
  if (with_repeat) b.repeat_counts.assign(b.size * num_candidates, 0.0);

  std::vector<NeighborEvent> window(k);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& item = items[i];
    b.sources[i] = item.s;
    b.times[i] = item.t;
    const std::size_t got = index.recent_neighbors_into(item.s, item.t, window);
    b.history[i] = got;
    const std::size_t pad = k - got;
    for (std::size_t j = 0; j < got; ++j) {
      b.neighbor_ids[i * k + pad + j] = window[j].peer;
      b.neighbor_mask[i * k + pad + j] = 0;
      b.neighbor_times[i * k + pad + j] = window[j].t;
    }
    std::size_t c = 0;
    candidates_of(item, [&](NodeId d) {
      if (c >= num_candidates) {
        throw std::invalid_argument("assemble_batch: queries differ in candidate count");
      }
      const std::size_t slot = i * num_candidates + c++;
      b.candidates[slot] = d;
      if (const auto last = index.last_activity(d, item.t)) {
        b.delta_t[slot] = static_cast<double>(item.t - *last);
      } else {
        b.never_active[slot] = 1;
      }
      if (with_repeat) {
        b.repeat_counts[slot] = static_cast<double>(index.repeat_count(item.s, d, item.t));
      }
    });
    if (c != num_candidates) {
      throw std::invalid_argument("assemble_batch: queries differ in candidate count");
    }
  }
  return b;
}

}  // namespace

QueryBatch assemble_batch(const NeighborIndex& index, std::span<const RankingQuery> queries,
                          std::size_t k, bool with_repeat) {
  const std::size_t nc = queries.empty() ? 0 : 1 + queries.front().negatives.size();
  return assemble(index, queries, k, with_repeat, nc, [](const RankingQuery& q, auto&& emit) {
    emit(q.d_pos);
    for (NodeId n : q.negatives) emit(n);
  });
}

QueryBatch assemble_batch(const NeighborIndex& index, std::span<const TrainingPair> pairs,
                          std::size_t k, bool with_repeat) {
  return assemble(index, pairs, k, with_repeat, 2, [](const TrainingPair& p, auto&& emit) {
    emit(p.d_pos);
    emit(p.d_neg);
  });
}

}  // namespace craft
