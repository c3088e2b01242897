#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "craft/tensor.hpp"

namespace craft::nn {

/// A trainable array with its gradient accumulator and Adam moments.
template <typename T>
struct ParamGroup {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;
  Tensor<T> v;
  /// Excluded from optimizer updates entirely.
  bool frozen = false;
  /// Rows whose gradient is discarded before each update (e.g. padding rows).
  std::vector<std::size_t> frozen_rows;

  ParamGroup() = default;
  ParamGroup(std::string n, Tensor<T> init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.shape()),
        m(value.shape()),
        v(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

/// Reverse-mode tape. Every primitive computes its forward value eagerly and,
/// when recording, registers a closure that propagates the output gradient
/// to its inputs. Gradients of parameter leaves accumulate directly into
/// ParamGroup::grad.
template <typename T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  Var constant(Tensor<T> value);
  Var param(ParamGroup<T>& group);

  const Tensor<T>& value(Var v) const;
  /// Gradient of a non-parameter node after backward(); empty if unreached.
  const Tensor<T>& grad(Var v) const;

  /// Seeds d(out)/d(out) = 1 for a single-element output.
  void backward(Var out);
  void backward(Var out, const Tensor<T>& seed);

  // ---- primitives -------------------------------------------------------

  /// a viewed as rows x n times b (n x p); output keeps a's leading dims.
  Var matmul(Var a, Var b);
  /// Batched: a [G x M x N] times b [G x N x P] (or b^T when b is [G x P x N]).
  Var bmm(Var a, Var b, bool transpose_b = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Adds a length-C row vector to every row of a.
  Var add_row(Var a, Var row);
  Var scale(Var a, T c);
  /// Concatenates along the last dimension; all inputs share rows().
  Var concat(std::span<const Var> parts);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  /// Softmax over the last dimension. When `key_mask` is given, entry
  /// key_mask[(r / rows_per_mask) * K + c] != 0 excludes column c of row r
  /// (weight exactly zero). A fully masked row is rejected.
  Var row_softmax(Var a, std::span<const std::uint8_t> key_mask = {},
                  std::size_t rows_per_mask = 1);
  /// Exact GELU: x * Phi(x).
  Var gelu(Var a);
  Var sigmoid(Var a);
  /// Natural log; rejects non-positive entries.
  Var log(Var a);
  /// log(1 + exp(x)), evaluated stably.
  Var softplus(Var a);
  /// Row lookup; a negative id yields a zero row. Backward scatter-adds.
  Var gather_rows(Var table, std::span<const std::int64_t> ids);
  /// Elementwise product with a constant mask (0 or 1/(1-p) entries).
  Var dropout_mask_apply(Var a, const Tensor<T>& mask);
  /// [(G*R) x (H*Dh)] -> [(G*H) x R x Dh]
  Var split_heads(Var a, std::size_t groups, std::size_t rows, std::size_t heads);
  /// Inverse of split_heads: [(G*H) x R x Dh] -> [(G*R) x (H*Dh)]
  Var merge_heads(Var a, std::size_t groups, std::size_t heads);
  Var reshape(Var a, Shape shape);
  /// Row i of the output is `row` where flags[i] != 0, else row i of a.
  Var select_rows(Var a, Var row, std::span<const std::uint8_t> flags);
  Var sum(Var a);
  Var mean(Var a);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    ParamGroup<T>* param = nullptr;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor<T> value, bool needs_grad);
  void set_backward(Var out, std::function<void()> fn);
  bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient slot of a node, zero-allocated on first use.
  Tensor<T>& grad_ref(Var v);
  const Tensor<T>& out_grad(Var v) const { return nodes_[v.id].grad; }
  void check(Var v) const;

  bool record_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace craft::nn
