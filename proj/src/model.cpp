#include "craft/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace craft {

using nn::ParamGroup;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void ModelConfig::validate() const {
  if (num_nodes == 0) throw std::invalid_argument("model: num_nodes must be positive");
  if (d == 0 || heads == 0 || d % heads != 0) {
    throw std::invalid_argument("model: d must be a positive multiple of heads");
  }
  if (layers == 0) throw std::invalid_argument("model: at least one layer is required");
  if (k == 0) throw std::invalid_argument("model: k must be at least 1");
  for (double p : {p_hidden, p_attn, p_emb}) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("model: dropout rates must lie in [0, 1)");
  }
}

double bpr_loss(double y_pos, double y_neg) {
  const double x = y_neg - y_pos;
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double bce_loss(double y_pos, double y_neg) {
  const auto softplus = [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); };
  return softplus(-y_pos) + softplus(y_neg);
}

namespace {

template <typename T>
Tensor<T> glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor<T> t({fan_in, fan_out});
  for (auto& x : t.values()) x = static_cast<T>(u(rng));
  return t;
}

template <typename T>
Tensor<T> normal(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  Tensor<T> t({rows, cols});
  for (auto& x : t.values()) x = static_cast<T>(n(rng));
  return t;
}

template <typename T>
Tensor<T> column(const std::vector<double>& values) {
  Tensor<T> t({values.size(), 1});
  for (std::size_t i = 0; i < values.size(); ++i) t[i] = static_cast<T>(values[i]);
  return t;
}

std::string layer_name(std::size_t l, const char* what) {
  return "layer" + std::to_string(l) + "." + what;
}

}  // namespace

template <typename T>
CraftModel<T>::CraftModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t n = config_.num_nodes, d = config_.d, f = config_.ffn();
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(Stream::kInit)});
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));

  auto table = normal<T>(rng, n + 1, d, emb_std);
  std::fill_n(table.data() + n * d, d, T{0});
  add_param("embedding", std::move(table));
  params_.back().frozen_rows = {n};

  if (config_.positional_mode == PositionalMode::kPosition) {
    auto pos = normal<T>(rng, config_.k, d, emb_std);
    if (!config_.use_positional) pos.fill(T{0});
    add_param("positional", std::move(pos));
    params_.back().frozen = !config_.use_positional;
  } else {
    add_param("time_enc.w", glorot<T>(rng, 1, d));
    add_param("time_enc.b", Tensor<T>({1, d}));
    add_param("time_enc.proj", glorot<T>(rng, 2 * d, d));
    add_param("time_enc.proj_b", Tensor<T>({1, d}));
  }

  for (std::size_t l = 0; l < config_.layers; ++l) {
    add_param(layer_name(l, "wq"), glorot<T>(rng, d, d));
    add_param(layer_name(l, "wk"), glorot<T>(rng, d, d));
    add_param(layer_name(l, "wv"), glorot<T>(rng, d, d));
    add_param(layer_name(l, "wo"), glorot<T>(rng, d, d));
    add_param(layer_name(l, "ffn_w1"), glorot<T>(rng, d, f));
    add_param(layer_name(l, "ffn_b1"), Tensor<T>({1, f}));
    add_param(layer_name(l, "ffn_w2"), glorot<T>(rng, f, d));
    add_param(layer_name(l, "ffn_b2"), Tensor<T>({1, d}));
  }

  std::size_t head_in = d;
  if (config_.use_elapsed) {
    add_param("time.w", glorot<T>(rng, 1, d));
    add_param("time.b", Tensor<T>({1, d}));
    add_param("time.fresh", normal<T>(rng, 1, d, emb_std));
    head_in += d;
  }
  if (config_.use_repeat) {
    add_param("repeat.w", glorot<T>(rng, 1, d));
    add_param("repeat.b", Tensor<T>({1, d}));
    head_in += d;
  }
  add_param("head.w1", glorot<T>(rng, head_in, d));
  add_param("head.b1", Tensor<T>({1, d}));
  add_param("head.w2", glorot<T>(rng, d, 1));
  add_param("head.b2", Tensor<T>({1, 1}));
}

template <typename T>
void CraftModel<T>::add_param(std::string name, Tensor<T> init) {
  params_.emplace_back(std::move(name), std::move(init));
}

template <typename T>
std::vector<ParamGroup<T>*> CraftModel<T>::parameters() {
  std::vector<ParamGroup<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::vector<const ParamGroup<T>*> CraftModel<T>::parameters() const {
  std::vector<const ParamGroup<T>*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
bool CraftModel<T>::has_param(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.name == name; });
}

template <typename T>
ParamGroup<T>& CraftModel<T>::param(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

template <typename T>
const ParamGroup<T>& CraftModel<T>::param(std::string_view name) const {
  return const_cast<CraftModel*>(this)->param(name);
}

template <typename T>
Var CraftModel<T>::dropout(Tape<T>& tape, Var x, double p, const ForwardOptions& opts) {
  if (!opts.training || p <= 0.0) return x;
  if (opts.dropout_rng == nullptr) {
    throw std::invalid_argument("training forward with dropout needs a dropout rng");
  }
  const auto& v = tape.value(x);
  Tensor<T> mask(v.shape());
  std::bernoulli_distribution drop(p);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.values()) m = drop(*opts.dropout_rng) ? T{0} : keep_scale;
  return tape.dropout_mask_apply(x, mask);
}

template <typename T>
Var CraftModel<T>::encode_source_context(Tape<T>& tape, const QueryBatch& batch,
                                         const ForwardOptions& opts) {
  const std::size_t k = batch.k, rows = batch.size * k;
  if (k != config_.k) {
    throw std::invalid_argument("batch neighbor count " + std::to_string(k) +
                                " differs from model k " + std::to_string(config_.k));
  }
  const Var table = tape.param(param("embedding"));
  Var ctx = tape.gather_rows(table, batch.neighbor_ids);

  if (config_.positional_mode == PositionalMode::kPosition) {
    // Slot k - 1 holds the most recent neighbor, which takes position 0.
    std::vector<std::int64_t> pos(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      pos[r] = batch.neighbor_mask[r] ? -1 : static_cast<std::int64_t>(k - 1 - r % k);
    }
    ctx = tape.add(ctx, tape.gather_rows(tape.param(param("positional")), pos));
  } else {
    std::vector<double> gap(rows, 0.0);
    std::vector<std::uint8_t> pad(rows, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (batch.neighbor_mask[r]) {
        pad[r] = 1;
        continue;
      }
      gap[r] = std::log1p(static_cast<double>(batch.times[r / k] - batch.neighbor_times[r]));
    }
    Var tv = tape.add_row(tape.matmul(tape.constant(column<T>(gap)), tape.param(param("time_enc.w"))),
                          tape.param(param("time_enc.b")));
    const Var parts[] = {ctx, tv};
    ctx = tape.add_row(tape.matmul(tape.concat(parts), tape.param(param("time_enc.proj"))),
                       tape.param(param("time_enc.proj_b")));
    // Padded rows stay zero like the padding embedding.
    ctx = tape.select_rows(ctx, tape.constant(Tensor<T>({1, config_.d})), pad);
  }
  return dropout(tape, ctx, config_.p_emb, opts);
}

template <typename T>
Var CraftModel<T>::cross_attention(Tape<T>& tape, Var candidates, Var context,
                                   std::span<const std::uint8_t> key_mask, std::size_t groups,
                                   std::size_t rows, const ForwardOptions& opts) {
  const std::size_t h = config_.heads;
  const std::size_t k = tape.value(context).rows() / groups;
  const T inv_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config_.head_dim())));
  if (capture_attention) captured_.clear();

  for (std::size_t g = 0; g < groups; ++g) {
    if (std::all_of(key_mask.begin() + static_cast<std::ptrdiff_t>(g * k),
                    key_mask.begin() + static_cast<std::ptrdiff_t>((g + 1) * k),
                    [](std::uint8_t m) { return m != 0; })) {
      throw ColdSourceError("query " + std::to_string(g) + " has an empty neighbor context");
    }
  }

  Var H = candidates;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const Var q = tape.matmul(H, tape.param(param(layer_name(l, "wq"))));
    const Var kk = tape.matmul(context, tape.param(param(layer_name(l, "wk"))));
    const Var v = tape.matmul(context, tape.param(param(layer_name(l, "wv"))));
    const Var qh = tape.split_heads(q, groups, rows, h);
    const Var kh = tape.split_heads(kk, groups, k, h);
    const Var vh = tape.split_heads(v, groups, k, h);
    Var attn = tape.row_softmax(tape.scale(tape.bmm(qh, kh, true), inv_scale), key_mask, h * rows);
    if (capture_attention) captured_.push_back(tape.value(attn));
    attn = dropout(tape, attn, config_.p_attn, opts);
    const Var z = tape.merge_heads(tape.bmm(attn, vh), groups, h);
    const Var zres = tape.add(tape.matmul(z, tape.param(param(layer_name(l, "wo")))), H);

    Var ff = tape.gelu(tape.add_row(tape.matmul(zres, tape.param(param(layer_name(l, "ffn_w1")))),
                                    tape.param(param(layer_name(l, "ffn_b1")))));
    ff = dropout(tape, ff, config_.p_hidden, opts);
    ff = tape.add_row(tape.matmul(ff, tape.param(param(layer_name(l, "ffn_w2")))),
                      tape.param(param(layer_name(l, "ffn_b2"))));
    H = tape.add(ff, zres);
  }
  return H;
}

template <typename T>
Var CraftModel<T>::forward(Tape<T>& tape, const QueryBatch& batch, const ForwardOptions& opts) {
  const std::size_t B = batch.size, j = batch.num_candidates, n = B * j;
  for (std::size_t i = 0; i < B; ++i) {
    if (batch.history[i] == 0) {
      throw ColdSourceError("source " + std::to_string(batch.sources[i]) +
                            " has no history before t=" + std::to_string(batch.times[i]));
    }
  }
  const Var ctx = encode_source_context(tape, batch, opts);
  std::vector<std::int64_t> cand(batch.candidates.begin(), batch.candidates.end());
  const Var dst = tape.gather_rows(tape.param(param("embedding")), cand);
  const Var H = cross_attention(tape, dst, ctx, batch.neighbor_mask, B, j, opts);

  std::vector<Var> parts{H};
  if (config_.use_elapsed) {
    std::vector<double> x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (!batch.never_active[i]) x[i] = std::log1p(batch.delta_t[i]);
    }
    Var tc = tape.add_row(tape.matmul(tape.constant(column<T>(x)), tape.param(param("time.w"))),
                          tape.param(param("time.b")));
    tc = tape.select_rows(tc, tape.param(param("time.fresh")), batch.never_active);
    parts.push_back(tc);
  }
  if (config_.use_repeat) {
    if (batch.repeat_counts.size() != n) {
      throw std::invalid_argument("repeat encoding enabled but the batch carries no repeat counts");
    }
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::log1p(batch.repeat_counts[i]);
    parts.push_back(tape.add_row(tape.matmul(tape.constant(column<T>(x)), tape.param(param("repeat.w"))),
                                 tape.param(param("repeat.b"))));
  }
  const Var features = parts.size() == 1 ? H : tape.concat(parts);
  Var hidden = tape.gelu(tape.add_row(tape.matmul(features, tape.param(param("head.w1"))),
                                      tape.param(param("head.b1"))));
  hidden = dropout(tape, hidden, config_.p_hidden, opts);
  const Var y = tape.add_row(tape.matmul(hidden, tape.param(param("head.w2"))),
                             tape.param(param("head.b2")));
  return tape.reshape(y, {B, j});
}

template <typename T>
std::vector<double> CraftModel<T>::score(const QueryBatch& batch) {
  Tape<T> tape(false);
  const Var y = forward(tape, batch);
  const auto& v = tape.value(y);
  return std::vector<double>(v.values().begin(), v.values().end());
}

template <typename T>
Var ranking_loss(Tape<T>& tape, Var scores, LossKind kind) {
  const std::size_t j = tape.value(scores).cols();
  if (j < 2) {
    throw std::invalid_argument("ranking loss needs at least one negative column");
  }
  const Var pos = tape.slice_cols(scores, 0, 1);
  std::vector<Var> terms;
  for (std::size_t c = 1; c < j; ++c) {
    const Var neg = tape.slice_cols(scores, c, c + 1);
    if (kind == LossKind::kBpr) {
      terms.push_back(tape.softplus(tape.sub(neg, pos)));
    } else {
      terms.push_back(tape.add(tape.softplus(tape.scale(pos, T(-1))), tape.softplus(neg)));
    }
  }
  return tape.mean(terms.size() == 1 ? terms.front() : tape.concat(terms));
}

template <typename T>
double train_step(CraftModel<T>& model, AdamState& opt, const QueryBatch& batch, LossKind loss,
                  Rng& dropout_rng) {
  Tape<T> tape(true);
  typename CraftModel<T>::ForwardOptions fo{true, &dropout_rng};
  const Var y = model.forward(tape, batch, fo);
  const Var l = ranking_loss(tape, y, loss);
  const double value = static_cast<double>(tape.value(l)[0]);
  if (!std::isfinite(value)) {
    throw std::runtime_error("non-finite loss");
  }
  tape.backward(l);
  auto params = model.parameters();
  nn::adam_step<T>(params, opt.settings, ++opt.step);
  return value;
}

template <typename T>
EpochStats train_epoch(CraftModel<T>& model, AdamState& opt, std::vector<TrainingPair> pairs,
                       const NeighborIndex& index, const TrainOptions& options,
                       std::size_t epoch) {
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  Rng shuffle_rng = make_rng(options.seed, {static_cast<std::uint64_t>(Stream::kShuffle), epoch});
  shuffle_training(shuffle_rng, pairs);

  EpochStats stats;
  const auto warm_end = std::stable_partition(pairs.begin(), pairs.end(), [&](const TrainingPair& p) {
    return !is_cold_source(index, p.s, p.t);
  });
  stats.skipped_cold = static_cast<std::size_t>(pairs.end() - warm_end);
  pairs.erase(warm_end, pairs.end());

  const bool repeat = model.config().use_repeat;
  double loss_sum = 0.0;
  for (std::size_t begin = 0; begin < pairs.size(); begin += options.batch_size) {
    const std::size_t end = std::min(pairs.size(), begin + options.batch_size);
    const std::span<const TrainingPair> chunk(pairs.data() + begin, end - begin);
    const QueryBatch batch = assemble_batch(index, chunk, model.config().k, repeat);
    Rng dropout_rng = make_rng(options.seed, {static_cast<std::uint64_t>(Stream::kDropout), epoch,
                                              stats.batches});
    double loss = 0.0;
    try {
      loss = train_step(model, opt, batch, options.loss, dropout_rng);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(stats.batches) + ": " + e.what());
    }
    loss_sum += loss * static_cast<double>(chunk.size());
    stats.pairs += chunk.size();
    ++stats.batches;
  }
  stats.mean_loss = stats.pairs ? loss_sum / static_cast<double>(stats.pairs) : 0.0;
  return stats;
}

template class CraftModel<float>;
template class CraftModel<double>;
template Var ranking_loss<float>(Tape<float>&, Var, LossKind);
template Var ranking_loss<double>(Tape<double>&, Var, LossKind);
template double train_step<float>(CraftModel<float>&, AdamState&, const QueryBatch&, LossKind, Rng&);
template double train_step<double>(CraftModel<double>&, AdamState&, const QueryBatch&, LossKind, Rng&);
template EpochStats train_epoch<float>(CraftModel<float>&, AdamState&, std::vector<TrainingPair>,
                                       const NeighborIndex&, const TrainOptions&, std::size_t);
template EpochStats train_epoch<double>(CraftModel<double>&, AdamState&, std::vector<TrainingPair>,
                                        const NeighborIndex&, const TrainOptions&, std::size_t);

}  // namespace craft
