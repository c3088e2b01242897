#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "craft/autodiff.hpp"
#include "craft/dataprep.hpp"
#include "craft/optim.hpp"

namespace craft {

enum class PositionalMode : std::uint8_t { kPosition = 0, kTimeInterval = 1 };
enum class LossKind : std::uint8_t { kBpr = 0, kBce = 1 };

struct ModelConfig {
  /// Node count of the dataset; the embedding table has one extra padding row.
  std::size_t num_nodes = 0;
  std::size_t d = 64;
  std::size_t heads = 2;
  std::size_t layers = 1;
  std::size_t k = 30;
  /// Inner FFN width; 0 selects 4 * d.
  std::size_t ffn_width = 0;
  double p_hidden = 0.1;
  double p_attn = 0.1;
  double p_emb = 0.1;
  /// Repeat-count encoding (CRAFT-R).
  bool use_repeat = false;
  /// Elapsed-time context in the prediction head.
  bool use_elapsed = true;
  /// Learned positional table; when false it stays frozen at zero.
  bool use_positional = true;
  PositionalMode positional_mode = PositionalMode::kPosition;

  std::size_t ffn() const { return ffn_width == 0 ? 4 * d : ffn_width; }
  std::size_t head_dim() const { return d / heads; }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// -log(sigmoid(pos - neg)) as softplus(neg - pos).
double bpr_loss(double y_pos, double y_neg);
/// Binary cross-entropy with target 1 for pos and 0 for neg.
double bce_loss(double y_pos, double y_neg);

/// Cross-attention link scorer over learnable node embeddings.
///
/// Each candidate destination attends to the source's k most recent
/// neighbors (position 0 = most recent); the attended representation is
/// concatenated with the candidate's elapsed-time context (and optionally
/// its repeat-count context) and fed to a two-layer MLP.
template <typename T>
class CraftModel {
 public:
  struct ForwardOptions {
    bool training = false;
    /// Required when training with any non-zero dropout rate.
    Rng* dropout_rng = nullptr;
  };

  CraftModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  /// All parameter groups in a fixed order.
  std::vector<nn::ParamGroup<T>*> parameters();
  std::vector<const nn::ParamGroup<T>*> parameters() const;
  nn::ParamGroup<T>& param(std::string_view name);
  const nn::ParamGroup<T>& param(std::string_view name) const;
  bool has_param(std::string_view name) const;

  /// Scores [batch.size x num_candidates]. Throws ColdSourceError when a
  /// query has no neighbor history.
  nn::Var forward(nn::Tape<T>& tape, const QueryBatch& batch, const ForwardOptions& opts = {});

  /// Source neighbor context [(size * k) x d]; padded rows are zero.
  nn::Var encode_source_context(nn::Tape<T>& tape, const QueryBatch& batch,
                                const ForwardOptions& opts = {});

  /// Stacked cross-attention. `candidates` is [(groups * rows) x d],
  /// `context` is [(groups * k) x d] and `key_mask` is groups x k with 1 on
  /// padded slots.
  nn::Var cross_attention(nn::Tape<T>& tape, nn::Var candidates, nn::Var context,
                          std::span<const std::uint8_t> key_mask, std::size_t groups,
                          std::size_t rows, const ForwardOptions& opts = {});

  /// Evaluation-mode scores, row-major size x num_candidates.
  std::vector<double> score(const QueryBatch& batch);

  /// Attention weights of one layer from the last forward call that had
  /// `capture_attention` enabled, [(groups * heads) x rows x k].
  bool capture_attention = false;
  const std::vector<nn::Tensor<T>>& captured_attention() const { return captured_; }

 private:
  nn::Var dropout(nn::Tape<T>& tape, nn::Var x, double p, const ForwardOptions& opts);
  void add_param(std::string name, nn::Tensor<T> init);

  ModelConfig config_;
  std::vector<nn::ParamGroup<T>> params_;
  std::vector<nn::Tensor<T>> captured_;
};

/// Loss over a scored batch whose column 0 is the positive and every other
/// column a negative; averaged over (positive, negative) pairs.
template <typename T>
nn::Var ranking_loss(nn::Tape<T>& tape, nn::Var scores, LossKind kind);

struct AdamState {
  nn::AdamSettings settings;
  std::size_t step = 0;
};

/// One forward/backward/update on a batch; returns the batch loss.
/// Throws std::runtime_error on a non-finite loss.
template <typename T>
double train_step(CraftModel<T>& model, AdamState& opt, const QueryBatch& batch, LossKind loss,
                  Rng& dropout_rng);

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t batches = 0;
  std::size_t pairs = 0;
  std::size_t skipped_cold = 0;
};

struct TrainOptions {
  std::size_t batch_size = 200;
  LossKind loss = LossKind::kBpr;
  std::uint64_t seed = 0;
};

/// Shuffles the pairs (stream keyed by seed and epoch), drops cold-source
/// pairs, and runs train_step over consecutive batches. Dropout masks are
/// keyed by (seed, epoch, batch ordinal).
template <typename T>
EpochStats train_epoch(CraftModel<T>& model, AdamState& opt, std::vector<TrainingPair> pairs,
                       const NeighborIndex& index, const TrainOptions& options,
                       std::size_t epoch);

extern template class CraftModel<float>;
extern template class CraftModel<double>;

}  // namespace craft
