#include "craft/evalkit.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace craft {

std::size_t rank_of_positive(std::span<const double> scores) {
  if (scores.empty()) {
    throw std::invalid_argument("rank_of_positive: empty score list");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw std::domain_error("rank_of_positive: non-finite score at index " + std::to_string(i));
    }
  }
  std::size_t rank = 1;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] >= scores[0]) ++rank;
  }
  return rank;
}

double mean_reciprocal_rank(std::span<const std::size_t> ranks) {
  if (ranks.empty()) return 0.0;
  double sum = 0.0;
  for (auto r : ranks) sum += 1.0 / static_cast<double>(r);
  return sum / static_cast<double>(ranks.size());
}

nlohmann::json EvalReport::to_json() const {
  return {{"mrr", mrr},       {"query_count", query_count}, {"skipped", skipped},
          {"seed", seed},     {"fingerprint", fingerprint}, {"ranks", ranks}};
}

double edgebank_score(const NeighborIndex& index, NodeId s, NodeId d, Timestamp t) {
  return index.repeat_count(s, d, t) > 0 ? 1.0 : 0.0;
}

std::vector<double> EdgeBankScorer::score(const QueryBatch& batch) {
  if (batch.repeat_counts.size() != batch.size * batch.num_candidates) {
    throw std::invalid_argument("EdgeBank needs a batch assembled with repeat counts");
  }
  std::vector<double> out(batch.repeat_counts.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = batch.repeat_counts[i] > 0.0 ? 1.0 : 0.0;
  return out;
}

EvalReport evaluate(Scorer& scorer, const NeighborIndex& index,
                    std::span<const RankingQuery> queries, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch size must be positive");
  const auto start = std::chrono::steady_clock::now();
  EvalReport report;
  std::vector<RankingQuery> warm;
  warm.reserve(queries.size());
  for (const auto& q : queries) {
    if (is_cold_source(index, q.s, q.t)) {
      ++report.skipped;
    } else {
      warm.push_back(q);
    }
  }
  report.ranks.reserve(warm.size());
  for (std::size_t begin = 0; begin < warm.size(); begin += batch_size) {
    const std::size_t end = std::min(warm.size(), begin + batch_size);
    const std::span<const RankingQuery> chunk(warm.data() + begin, end - begin);
    const QueryBatch batch =
        assemble_batch(index, chunk, scorer.context_size(), scorer.needs_repeat_counts());
    const auto scores = scorer.score(batch);
    const std::size_t nc = batch.num_candidates;
    for (std::size_t i = 0; i < batch.size; ++i) {
      report.ranks.push_back(rank_of_positive(std::span<const double>(scores.data() + i * nc, nc)));
    }
  }
  report.query_count = report.ranks.size();
  report.mrr = mean_reciprocal_rank(report.ranks);
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace craft
