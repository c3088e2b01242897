#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "craft/dataprep.hpp"
#include "craft/model.hpp"

namespace craft {

/// 1 + #negatives scoring above the positive + #negatives tying it
/// (ties count against the positive). scores[0] is the positive.
std::size_t rank_of_positive(std::span<const double> scores);

struct EvalReport {
  double mrr = 0.0;
  std::vector<std::size_t> ranks;
  std::size_t query_count = 0;
  std::size_t skipped = 0;
  /// Excluded from to_json().
  double wall_ms = 0.0;
  std::string fingerprint;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

double mean_reciprocal_rank(std::span<const std::size_t> ranks);

/// Anything that scores a batch of candidate lists.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// Row-major batch.size x num_candidates.
  virtual std::vector<double> score(const QueryBatch& batch) = 0;
  virtual std::size_t context_size() const = 0;
  virtual bool needs_repeat_counts() const = 0;
};

template <typename T>
class ModelScorer final : public Scorer {
 public:
  explicit ModelScorer(CraftModel<T>& model) : model_(model) {}
  std::vector<double> score(const QueryBatch& batch) override { return model_.score(batch); }
  std::size_t context_size() const override { return model_.config().k; }
  bool needs_repeat_counts() const override { return model_.config().use_repeat; }

 private:
  CraftModel<T>& model_;
};

/// 1 if the (s, d) pair occurred strictly before t, else 0.
double edgebank_score(const NeighborIndex& index, NodeId s, NodeId d, Timestamp t);

/// Unlimited-memory EdgeBank over the batch's repeat counts.
class EdgeBankScorer final : public Scorer {
 public:
  std::vector<double> score(const QueryBatch& batch) override;
  std::size_t context_size() const override { return 1; }
  bool needs_repeat_counts() const override { return true; }
};

/// Ranks every query whose source has history before its time; cold-source
/// queries are counted in `skipped` and excluded from the MRR.
EvalReport evaluate(Scorer& scorer, const NeighborIndex& index,
                    std::span<const RankingQuery> queries, std::size_t batch_size);

}  // namespace craft
