#include "craft/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "craft/model.hpp"

namespace craft {

namespace {

using Clock = std::chrono::steady_clock;

BenchRow summarize(std::string knob, double value, std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const auto pick = [&](double frac) {
    const auto idx = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(samples.size()))) - 1;
    return samples[std::min(idx, samples.size() - 1)];
  };
  BenchRow r;
  r.knob = std::move(knob);
  r.value = value;
  r.mean_ns = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  r.p50_ns = pick(0.5);
  r.p95_ns = pick(0.95);
  r.repeats = samples.size();
  return r;
}

template <typename Fn>
std::vector<double> time_repeats(std::size_t repeats, double divisor, Fn&& fn) {
  fn();  // warm-up
  std::vector<double> out;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = Clock::now();
    fn();
    const double ns = std::chrono::duration<double, std::nano>(Clock::now() - start).count();
    out.push_back(ns / divisor);
  }
  return out;
}

BenchRow bench_extraction(std::size_t degree, const BenchGrid& g) {
  constexpr std::size_t kPeers = 1000;
  std::vector<TemporalEdge> edges(degree);
  for (std::size_t i = 0; i < degree; ++i) {
    edges[i] = {0, static_cast<NodeId>(1 + i % kPeers), static_cast<Timestamp>(i), i};
  }
  const NeighborIndex index = NeighborIndex::build(edges, {kPeers + 1, false, 0});
  edges.clear();
  edges.shrink_to_fit();

  Rng rng = make_rng(g.seed, {static_cast<std::uint64_t>(degree)});
  std::uniform_int_distribution<Timestamp> when(1, static_cast<Timestamp>(degree));
  std::vector<Timestamp> times(g.extraction_queries);
  for (auto& t : times) t = when(rng);
  std::vector<NeighborEvent> window(g.k_fixed);
  std::size_t sink = 0;
  auto samples = time_repeats(g.repeats, static_cast<double>(times.size()), [&] {
    for (Timestamp t : times) sink += index.recent_neighbors_into(0, t, window);
  });
  if (sink == 0) throw std::logic_error("extraction benchmark returned no neighbors");
  return summarize("degree", static_cast<double>(degree), std::move(samples));
}

QueryBatch synthetic_batch(Rng& rng, std::size_t batch, std::size_t k, std::size_t candidates,
                           std::size_t nodes) {
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(nodes - 1));
  std::uniform_real_distribution<double> gap(1.0, 1000.0);
  QueryBatch b;
  b.size = batch;
  b.k = k;
  b.num_candidates = candidates;
  b.padding_id = static_cast<std::int64_t>(nodes);
  b.sources.assign(batch, 0);
  b.times.assign(batch, 1000000);
  b.history.assign(batch, k);
  b.neighbor_ids.resize(batch * k);
  for (auto& id : b.neighbor_ids) id = node(rng);
  b.neighbor_mask.assign(batch * k, 0);
  b.neighbor_times.resize(batch * k);
  for (std::size_t i = 0; i < batch * k; ++i) b.neighbor_times[i] = 999000 + static_cast<Timestamp>(i % k);
  b.candidates.resize(batch * candidates);
  for (auto& c : b.candidates) c = node(rng);
  b.delta_t.resize(batch * candidates);
  for (auto& x : b.delta_t) x = gap(rng);
  b.never_active.assign(batch * candidates, 0);
  return b;
}

ModelConfig bench_model(const BenchGrid& g, std::size_t k, std::size_t nodes) {
  ModelConfig c;
  c.num_nodes = nodes;
  c.d = g.d;
  c.k = k;
  return c;
}

BenchRow bench_scoring(const std::string& knob, std::size_t k, std::size_t q, const BenchGrid& g) {
  constexpr std::size_t kNodes = 5000;
  CraftModel<float> model(bench_model(g, k, kNodes), g.seed);
  Rng rng = make_rng(g.seed, {k, q});
  const QueryBatch b = synthetic_batch(rng, g.batch, k, 1 + q, kNodes);
  double sink = 0.0;
  auto samples = time_repeats(g.repeats, 1.0, [&] { sink += model.score(b).front(); });
  if (!std::isfinite(sink)) throw std::logic_error("scoring benchmark produced a non-finite score");
  return summarize(knob, static_cast<double>(knob == "k" ? k : q), std::move(samples));
}

/// Every candidate re-encodes the whole neighbor context on its own, as
/// per-candidate aggregation schemes do.
BenchRow bench_per_candidate(std::size_t q, const BenchGrid& g) {
  constexpr std::size_t kNodes = 5000;
  const std::size_t k = g.k_fixed, groups = g.batch * (1 + q);
  CraftModel<float> model(bench_model(g, k, kNodes), g.seed);
  Rng rng = make_rng(g.seed, {k, q, 1});
  const QueryBatch b = synthetic_batch(rng, g.batch, k, 1 + q, kNodes);
  std::vector<std::int64_t> repeated_ids(groups * k);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const std::size_t query = grp / (1 + q);
    std::copy_n(b.neighbor_ids.begin() + static_cast<std::ptrdiff_t>(query * k), k,
                repeated_ids.begin() + static_cast<std::ptrdiff_t>(grp * k));
  }
  const std::vector<std::uint8_t> mask(groups * k, 0);
  std::vector<std::int64_t> cand(b.candidates.begin(), b.candidates.end());
  double sink = 0.0;
  auto samples = time_repeats(g.repeats, 1.0, [&] {
    nn::Tape<float> tape(false);
    const nn::Var table = tape.param(model.param("embedding"));
    const nn::Var ctx = tape.gather_rows(table, repeated_ids);
    const nn::Var dst = tape.gather_rows(table, cand);
    const nn::Var h = model.cross_attention(tape, dst, ctx, mask, groups, 1);
    sink += tape.value(h)[0];
  });
  if (!std::isfinite(sink)) throw std::logic_error("baseline benchmark produced a non-finite value");
  return summarize("q_per_candidate", static_cast<double>(q), std::move(samples));
}

}  // namespace

std::vector<BenchRow> bench_complexity(const BenchGrid& grid) {
  if (grid.k_fixed == 0 || std::find(grid.ks.begin(), grid.ks.end(), 0u) != grid.ks.end()) {
    throw std::invalid_argument("bench: every k grid point must be at least 1");
  }
  if (grid.q_fixed == 0 || std::find(grid.qs.begin(), grid.qs.end(), 0u) != grid.qs.end()) {
    throw std::invalid_argument("bench: every q grid point must be at least 1");
  }
  if (std::find(grid.degrees.begin(), grid.degrees.end(), 0u) != grid.degrees.end()) {
    throw std::invalid_argument("bench: every degree grid point must be at least 1");
  }
  if (grid.repeats == 0 || grid.batch == 0 || grid.d == 0) {
    throw std::invalid_argument("bench: repeats, batch and d must be positive");
  }
  std::vector<BenchRow> rows;
  for (std::size_t deg : grid.degrees) rows.push_back(bench_extraction(deg, grid));
  for (std::size_t k : grid.ks) rows.push_back(bench_scoring("k", k, grid.q_fixed, grid));
  for (std::size_t q : grid.qs) rows.push_back(bench_scoring("q", grid.k_fixed, q, grid));
  if (grid.per_candidate_baseline) {
    for (std::size_t q : grid.qs) rows.push_back(bench_per_candidate(q, grid));
  }
  return rows;
}

double loglog_slope(const std::vector<BenchRow>& rows, const std::string& knob) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) {
    if (r.knob == knob) pts.emplace_back(std::log(r.value), std::log(r.mean_ns));
  }
  if (pts.size() < 2) throw std::invalid_argument("slope needs at least two '" + knob + "' rows");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : pts) mx += x, my += y;
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : pts) sxy += (x - mx) * (y - my), sxx += (x - mx) * (x - mx);
  return sxy / sxx;
}

double bench_mean(const std::vector<BenchRow>& rows, const std::string& knob, double value) {
  for (const auto& r : rows) {
    if (r.knob == knob && r.value == value) return r.mean_ns;
  }
  throw std::invalid_argument("no benchmark row for " + knob + "=" + std::to_string(value));
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "knob,value,mean_ns,p50_ns,p95_ns,repeats\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%g,%.1f,%.1f,%.1f,%zu\n", r.knob.c_str(), r.value, r.mean_ns,
                  r.p50_ns, r.p95_ns, r.repeats);
    out << buf;
  }
  return out.str();
}

}  // namespace craft
