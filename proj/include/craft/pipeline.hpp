#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "craft/bundle.hpp"
#include "craft/evalkit.hpp"
#include "craft/run_config.hpp"
#include "craft/split_io.hpp"
#include "craft/training.hpp"

namespace craft {

/// A dataset with its index, chronological split and fixed evaluation
/// queries.
struct PreparedData {
  Dataset data;
  NeighborIndex index;
  EdgeSplit split;
  NegativeCache negatives;
};

PreparedData prepare_data(Dataset data, const SplitFractions& fractions, std::uint64_t seed,
                          std::size_t q_eval);

/// Output files of a training run; empty paths are skipped.
struct TrainArtifacts {
  std::filesystem::path checkpoint;
  /// One JSON object per epoch: epoch, train_loss, val_mrr,
  /// skipped_cold_sources, seed, fingerprint.
  std::filesystem::path metrics;
  /// Per-epoch wall-clock times, kept apart from the metrics stream.
  std::filesystem::path timing;
};

struct RunResult {
  FitResult fit;
  EvalReport val;
  EvalReport test;
};

/// Trains with early stopping, restores the best epoch, and evaluates on the
/// validation and test queries. Precision follows the config.
RunResult run_training(const PreparedData& prepared, const RunConfig& config,
                       const TrainArtifacts& artifacts = {});

/// Unlimited-memory EdgeBank on the prepared validation or test queries.
EvalReport evaluate_edgebank(const PreparedData& prepared, Phase phase, std::size_t batch_size = 200);

/// Scores fixed queries with a stored checkpoint. Throws DataError when the
/// checkpoint was trained on a different dataset.
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const PreparedData& prepared,
                               Phase phase, std::size_t batch_size = 200);

/// Which single-component removals to run next to the base model.
struct AblationToggles {
  bool pos_enc = false;
  bool elapsed = false;
  bool repeat = false;
};

struct AblationRow {
  std::string variant;
  double val_mrr = 0.0;
  double test_mrr = 0.0;
  /// test_mrr minus the base test_mrr.
  double delta = 0.0;
  std::size_t best_epoch = 0;
};

/// Trains the base configuration and each requested variant with the same
/// seed. The base row comes first.
std::vector<AblationRow> run_ablation(const PreparedData& prepared, const RunConfig& config,
                                      const AblationToggles& toggles);

std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace craft
