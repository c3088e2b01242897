#pragma once

#include <functional>
#include <span>
#include <vector>

#include "craft/evalkit.hpp"
#include "craft/model.hpp"

namespace craft {

struct FitOptions {
  std::size_t max_epochs = 100;
  /// Epochs without validation improvement before stopping.
  std::size_t patience = 5;
  std::size_t batch_size = 200;
  std::size_t eval_batch_size = 200;
  LossKind loss = LossKind::kBpr;
  nn::AdamSettings adam;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mrr = 0.0;
  double wall_ms = 0.0;
  std::size_t skipped_cold_sources = 0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mrr = -1.0;
};

/// Trains with per-epoch negative resampling and shuffling, evaluates
/// validation MRR after each epoch, and stops after `patience` epochs without
/// improvement. On return the model holds the best-epoch parameters.
template <typename T>
FitResult fit(CraftModel<T>& model, const NeighborIndex& index,
              std::span<const TemporalEdge> train_edges,
              std::span<const RankingQuery> val_queries, const FitOptions& options,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

extern template FitResult fit<float>(CraftModel<float>&, const NeighborIndex&,
                                     std::span<const TemporalEdge>, std::span<const RankingQuery>,
                                     const FitOptions&, const std::function<void(const EpochRecord&)>&);
extern template FitResult fit<double>(CraftModel<double>&, const NeighborIndex&,
                                      std::span<const TemporalEdge>, std::span<const RankingQuery>,
                                      const FitOptions&, const std::function<void(const EpochRecord&)>&);

}  // namespace craft
