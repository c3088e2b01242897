#include "craft/training.hpp"

#include <chrono>

namespace craft {

template <typename T>
FitResult fit(CraftModel<T>& model, const NeighborIndex& index,
              std::span<const TemporalEdge> train_edges,
              std::span<const RankingQuery> val_queries, const FitOptions& options,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  AdamState opt{options.adam, 0};
  TrainOptions topt{options.batch_size, options.loss, options.seed};
  FitResult result;
  std::vector<nn::Tensor<T>> best;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    Rng neg_rng = make_rng(options.seed, {static_cast<std::uint64_t>(Stream::kTrainNegatives), epoch});
    auto pairs = make_training_pairs(neg_rng, train_edges, index);
    const EpochStats stats = train_epoch(model, opt, std::move(pairs), index, topt, epoch);

    ModelScorer<T> scorer(model);
    const EvalReport val = evaluate(scorer, index, val_queries, options.eval_batch_size);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = stats.mean_loss;
    rec.val_mrr = val.mrr;
    rec.skipped_cold_sources = stats.skipped_cold;
    rec.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (val.mrr > result.best_val_mrr) {
      result.best_val_mrr = val.mrr;
      result.best_epoch = epoch;
      best.clear();
      for (const auto* p : model.parameters()) best.push_back(p->value);
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  if (!best.empty()) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  }
  return result;
}

template FitResult fit<float>(CraftModel<float>&, const NeighborIndex&,
                              std::span<const TemporalEdge>, std::span<const RankingQuery>,
                              const FitOptions&, const std::function<void(const EpochRecord&)>&);
template FitResult fit<double>(CraftModel<double>&, const NeighborIndex&,
                               std::span<const TemporalEdge>, std::span<const RankingQuery>,
                               const FitOptions&, const std::function<void(const EpochRecord&)>&);

}  // namespace craft
