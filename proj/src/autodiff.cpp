#include "craft/autodiff.hpp"

#include <cmath>

#include <Eigen/Core>

namespace craft::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
MatMap<T> as_mat(T* p, std::size_t r, std::size_t c) {
  return MatMap<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
ConstMatMap<T> as_mat(const T* p, std::size_t r, std::size_t c) {
  return ConstMatMap<T>(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require(bool ok, const std::string& what, const Shape& a, const Shape& b) {
  if (!ok) {
    throw ShapeError(what + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
  }
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T{0}) {
    return T{1} / (T{1} + std::exp(-x));
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
void Tape<T>::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw std::invalid_argument("invalid tape handle");
  }
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
void Tape<T>::set_backward(Var out, std::function<void()> fn) {
  if (nodes_[out.id].needs_grad) {
    nodes_[out.id].backward = std::move(fn);
  }
}

template <typename T>
Tensor<T>& Tape<T>::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.param != nullptr) {
    return n.param->grad;
  }
  if (n.grad.empty() && n.value.size() > 0) {
    n.grad = Tensor<T>(n.value.shape());
  }
  return n.grad;
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
Var Tape<T>::param(ParamGroup<T>& group) {
  Node n;
  n.param = &group;
  n.needs_grad = record_ && !group.frozen;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return n.param != nullptr ? n.param->value : n.value;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return n.param != nullptr ? n.param->grad : n.grad;
}

template <typename T>
void Tape<T>::backward(Var out) {
  Tensor<T> seed(value(out).shape(), T{1});
  if (seed.size() != 1) {
    throw ShapeError("backward() without a seed needs a single-element output, got " +
                     shape_str(seed.shape()));
  }
  backward(out, seed);
}

template <typename T>
void Tape<T>::backward(Var out, const Tensor<T>& seed) {
  check(out);
  if (!record_) {
    throw std::logic_error("backward on a non-recording tape");
  }
  require(seed.size() == value(out).size(), "backward seed", seed.shape(), value(out).shape());
  if (!nodes_[out.id].needs_grad) {
    return;
  }
  Tensor<T>& g = grad_ref(out);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
  for (std::size_t id = out.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) {
      n.backward();
    }
  }
}

// ---- linear algebra ------------------------------------------------------

template <typename T>
Var Tape<T>::matmul(Var a, Var b) {
  check(a);
  check(b);
  const auto& A = value(a);
  const auto& B = value(b);
  require(B.rank() == 2 && A.cols() == B.dim(0), "matmul", A.shape(), B.shape());
  const std::size_t m = A.rows(), n = A.cols(), p = B.dim(1);
  Shape out_shape = A.shape();
  out_shape.back() = p;
  Tensor<T> C(out_shape);
  as_mat(C.data(), m, p).noalias() = as_mat(A.data(), m, n) * as_mat(B.data(), n, p);
  Var out = push(std::move(C), needs(a) || needs(b));
  set_backward(out, [this, a, b, out, m, n, p] {
    const auto& dC = out_grad(out);
    if (needs(a)) {
      as_mat(grad_ref(a).data(), m, n).noalias() +=
          as_mat(dC.data(), m, p) * as_mat(value(b).data(), n, p).transpose();
    }
    if (needs(b)) {
      as_mat(grad_ref(b).data(), n, p).noalias() +=
          as_mat(value(a).data(), m, n).transpose() * as_mat(dC.data(), m, p);
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::bmm(Var a, Var b, bool transpose_b) {
  check(a);
  check(b);
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.rank() == 3 && B.rank() == 3 && A.dim(0) == B.dim(0), "bmm", A.shape(), B.shape());
  const std::size_t G = A.dim(0), M = A.dim(1), N = A.dim(2);
  const std::size_t P = transpose_b ? B.dim(1) : B.dim(2);
  require((transpose_b ? B.dim(2) : B.dim(1)) == N, "bmm", A.shape(), B.shape());
  Tensor<T> C({G, M, P});
  for (std::size_t g = 0; g < G; ++g) {
    auto Ag = as_mat(A.data() + g * M * N, M, N);
    auto Cg = as_mat(C.data() + g * M * P, M, P);
    if (transpose_b) {
      Cg.noalias() = Ag * as_mat(B.data() + g * P * N, P, N).transpose();
    } else {
      Cg.noalias() = Ag * as_mat(B.data() + g * N * P, N, P);
    }
  }
  Var out = push(std::move(C), needs(a) || needs(b));
  set_backward(out, [this, a, b, out, G, M, N, P, transpose_b] {
    const auto& dC = out_grad(out);
    const auto& Av = value(a);
    const auto& Bv = value(b);
    T* dA = needs(a) ? grad_ref(a).data() : nullptr;
    T* dB = needs(b) ? grad_ref(b).data() : nullptr;
    for (std::size_t g = 0; g < G; ++g) {
      auto dCg = as_mat(dC.data() + g * M * P, M, P);
      if (transpose_b) {
        // C = A Bt^T with Bt [P x N]
        if (dA) as_mat(dA + g * M * N, M, N).noalias() += dCg * as_mat(Bv.data() + g * P * N, P, N);
        if (dB) as_mat(dB + g * P * N, P, N).noalias() += dCg.transpose() * as_mat(Av.data() + g * M * N, M, N);
      } else {
        if (dA) as_mat(dA + g * M * N, M, N).noalias() += dCg * as_mat(Bv.data() + g * N * P, N, P).transpose();
        if (dB) as_mat(dB + g * N * P, N, P).noalias() += as_mat(Av.data() + g * M * N, M, N).transpose() * dCg;
      }
    }
  });
  return out;
}

// ---- elementwise ---------------------------------------------------------

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  check(a);
  check(b);
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.shape() == B.shape(), "add", A.shape(), B.shape());
  Tensor<T> C(A.shape());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] + B[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  set_backward(out, [this, a, b, out] {
    const auto& dC = out_grad(out);
    for (Var v : {a, b}) {
      if (!needs(v)) continue;
      auto& g = grad_ref(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  check(a);
  check(b);
  const auto& A = value(a);
  const auto& B = value(b);
  require(A.shape() == B.shape(), "sub", A.shape(), B.shape());
  Tensor<T> C(A.shape());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] - B[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  set_backward(out, [this, a, b, out] {
    const auto& dC = out_grad(out);
    if (needs(a)) {
      auto& g = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i];
    }
    if (needs(b)) {
      auto& g = grad_ref(b);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= dC[i];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::add_row(Var a, Var row) {
  check(a);
  check(row);
  const auto& A = value(a);
  const auto& R = value(row);
  require(R.size() == A.cols(), "add_row", A.shape(), R.shape());
  const std::size_t rows = A.rows(), cols = A.cols();
  Tensor<T> C(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) C[r * cols + c] = A[r * cols + c] + R[c];
  }
  Var out = push(std::move(C), needs(a) || needs(row));
  set_backward(out, [this, a, row, out, rows, cols] {
    const auto& dC = out_grad(out);
    if (needs(a)) {
      auto& g = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i];
    }
    if (needs(row)) {
      auto& g = grad_ref(row);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[c] += dC[r * cols + c];
      }
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::scale(Var a, T c) {
  check(a);
  const auto& A = value(a);
  Tensor<T> C(A.shape());
  for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] * c;
  Var out = push(std::move(C), needs(a));
  set_backward(out, [this, a, out, c] {
    const auto& dC = out_grad(out);
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dC[i] * c;
  });
  return out;
}

template <typename T>
Var Tape<T>::concat(std::span<const Var> parts) {
  if (parts.empty()) {
    throw ShapeError("concat of zero inputs");
  }
  const std::size_t rows = value(parts[0]).rows();
  std::size_t total = 0;
  bool any = false;
  std::vector<std::size_t> widths;
  for (Var v : parts) {
    check(v);
    const auto& P = value(v);
    require(P.rows() == rows, "concat", value(parts[0]).shape(), P.shape());
    widths.push_back(P.cols());
    total += P.cols();
    any = any || needs(v);
  }
  Shape shape = value(parts[0]).shape();
  if (shape.empty()) shape = {1};
  shape.back() = total;
  Tensor<T> C(shape);
  std::size_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& P = value(parts[p]);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(P.data() + r * widths[p], widths[p], C.data() + r * total + off);
    }
    off += widths[p];
  }
  Var out = push(std::move(C), any);
  std::vector<Var> inputs(parts.begin(), parts.end());
  set_backward(out, [this, inputs, widths, out, rows, total] {
    const auto& dC = out_grad(out);
    std::size_t off = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (needs(inputs[p])) {
        auto& g = grad_ref(inputs[p]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[p]; ++c) {
            g[r * widths[p] + c] += dC[r * total + off + c];
          }
        }
      }
      off += widths[p];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::slice_cols(Var a, std::size_t begin, std::size_t end) {
  check(a);
  const auto& A = value(a);
  if (begin >= end || end > A.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + shape_str(A.shape()));
  }
  const std::size_t rows = A.rows(), cols = A.cols(), w = end - begin;
  Shape shape = A.shape();
  shape.back() = w;
  Tensor<T> C(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(A.data() + r * cols + begin, w, C.data() + r * w);
  }
  Var out = push(std::move(C), needs(a));
  set_backward(out, [this, a, out, rows, cols, begin, w] {
    const auto& dC = out_grad(out);
    auto& g = grad_ref(a);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) g[r * cols + begin + c] += dC[r * w + c];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::row_softmax(Var a, std::span<const std::uint8_t> key_mask,
                         std::size_t rows_per_mask) {
  check(a);
  const auto& A = value(a);
  const std::size_t rows = A.rows(), K = A.cols();
  const bool masked = !key_mask.empty();
  if (masked) {
    if (rows_per_mask == 0 || rows % rows_per_mask != 0 ||
        key_mask.size() != (rows / rows_per_mask) * K) {
      throw ShapeError("row_softmax: key mask of " + std::to_string(key_mask.size()) +
                       " entries does not fit " + shape_str(A.shape()));
    }
  }
  Tensor<T> Y(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = A.data() + r * K;
    T* y = Y.data() + r * K;
    const std::uint8_t* mk = masked ? key_mask.data() + (r / rows_per_mask) * K : nullptr;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < K; ++c) {
      if (!mk || !mk[c]) mx = std::max(mx, x[c]);
    }
    if (!std::isfinite(mx)) {
      throw std::invalid_argument("row_softmax: row " + std::to_string(r) +
                                  " has no unmasked finite entry");
    }
    T sum = 0;
    for (std::size_t c = 0; c < K; ++c) {
      y[c] = (mk && mk[c]) ? T{0} : std::exp(x[c] - mx);
      sum += y[c];
    }
    for (std::size_t c = 0; c < K; ++c) y[c] /= sum;
  }
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out, rows, K] {
    const auto& dY = out_grad(out);
    const auto& Yv = value(out);
    auto& g = grad_ref(a);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = Yv.data() + r * K;
      const T* dy = dY.data() + r * K;
      T dot = 0;
      for (std::size_t c = 0; c < K; ++c) dot += y[c] * dy[c];
      for (std::size_t c = 0; c < K; ++c) g[r * K + c] += y[c] * (dy[c] - dot);
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::gelu(Var a) {
  check(a);
  const auto& A = value(a);
  Tensor<T> Y(A.shape());
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < Y.size(); ++i) {
    Y[i] = A[i] * T(0.5) * (T(1) + std::erf(A[i] * inv_sqrt2));
  }
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out, inv_sqrt2] {
    const auto& dY = out_grad(out);
    const auto& X = value(a);
    auto& g = grad_ref(a);
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = X[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = std::exp(T(-0.5) * x * x) * inv_sqrt2pi;
      g[i] += dY[i] * (cdf + x * pdf);
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::sigmoid(Var a) {
  check(a);
  const auto& A = value(a);
  Tensor<T> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = sigmoid_scalar(A[i]);
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out] {
    const auto& dY = out_grad(out);
    const auto& Yv = value(out);
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dY[i] * Yv[i] * (T(1) - Yv[i]);
  });
  return out;
}

template <typename T>
Var Tape<T>::log(Var a) {
  check(a);
  const auto& A = value(a);
  Tensor<T> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) {
    if (!(A[i] > T(0))) {
      throw std::domain_error("log of non-positive value at index " + std::to_string(i));
    }
    Y[i] = std::log(A[i]);
  }
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out] {
    const auto& dY = out_grad(out);
    const auto& X = value(a);
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dY[i] / X[i];
  });
  return out;
}

template <typename T>
Var Tape<T>::softplus(Var a) {
  check(a);
  const auto& A = value(a);
  Tensor<T> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) {
    const T x = A[i];
    Y[i] = std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
  }
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out] {
    const auto& dY = out_grad(out);
    const auto& X = value(a);
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dY[i] * sigmoid_scalar(X[i]);
  });
  return out;
}

// ---- indexing and layout --------------------------------------------------

template <typename T>
Var Tape<T>::gather_rows(Var table, std::span<const std::int64_t> ids) {
  check(table);
  const auto& E = value(table);
  const std::size_t rows = E.rows(), cols = E.cols();
  Tensor<T> Y({ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) continue;
    if (static_cast<std::size_t>(ids[i]) >= rows) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(rows) + " rows");
    }
    std::copy_n(E.data() + static_cast<std::size_t>(ids[i]) * cols, cols, Y.data() + i * cols);
  }
  Var out = push(std::move(Y), needs(table));
  std::vector<std::int64_t> idv(ids.begin(), ids.end());
  set_backward(out, [this, table, out, idv = std::move(idv), cols] {
    const auto& dY = out_grad(out);
    auto& g = grad_ref(table);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      if (idv[i] < 0) continue;
      T* dst = g.data() + static_cast<std::size_t>(idv[i]) * cols;
      const T* src = dY.data() + i * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::dropout_mask_apply(Var a, const Tensor<T>& mask) {
  check(a);
  const auto& A = value(a);
  require(mask.size() == A.size(), "dropout_mask_apply", A.shape(), mask.shape());
  Tensor<T> Y(A.shape());
  for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = A[i] * mask[i];
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out, mask] {
    const auto& dY = out_grad(out);
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dY[i] * mask[i];
  });
  return out;
}

template <typename T>
Var Tape<T>::split_heads(Var a, std::size_t groups, std::size_t rows, std::size_t heads) {
  check(a);
  const auto& A = value(a);
  const std::size_t width = A.cols();
  if (heads == 0 || width % heads != 0 || A.rows() != groups * rows) {
    throw ShapeError("split_heads: " + shape_str(A.shape()) + " cannot be split into " +
                     std::to_string(groups) + " groups of " + std::to_string(rows) +
                     " rows and " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = width / heads;
  Tensor<T> Y({groups * heads, rows, dh});
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = A.data() + (g * rows + r) * width;
      for (std::size_t h = 0; h < heads; ++h) {
        std::copy_n(src + h * dh, dh, Y.data() + ((g * heads + h) * rows + r) * dh);
      }
    }
  }
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out, groups, rows, heads, dh, width] {
    const auto& dY = out_grad(out);
    auto& gA = grad_ref(a);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t r = 0; r < rows; ++r) {
        T* dst = gA.data() + (g * rows + r) * width;
        for (std::size_t h = 0; h < heads; ++h) {
          const T* src = dY.data() + ((g * heads + h) * rows + r) * dh;
          for (std::size_t x = 0; x < dh; ++x) dst[h * dh + x] += src[x];
        }
      }
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::merge_heads(Var a, std::size_t groups, std::size_t heads) {
  check(a);
  const auto& A = value(a);
  if (A.rank() != 3 || A.dim(0) != groups * heads) {
    throw ShapeError("merge_heads: " + shape_str(A.shape()) + " is not [" +
                     std::to_string(groups * heads) + " x R x Dh]");
  }
  const std::size_t rows = A.dim(1), dh = A.dim(2), width = heads * dh;
  Tensor<T> Y({groups * rows, width});
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(A.data() + ((g * heads + h) * rows + r) * dh, dh,
                    Y.data() + (g * rows + r) * width + h * dh);
      }
    }
  }
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out, groups, rows, heads, dh, width] {
    const auto& dY = out_grad(out);
    auto& gA = grad_ref(a);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t r = 0; r < rows; ++r) {
          T* dst = gA.data() + ((g * heads + h) * rows + r) * dh;
          const T* src = dY.data() + (g * rows + r) * width + h * dh;
          for (std::size_t x = 0; x < dh; ++x) dst[x] += src[x];
        }
      }
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::reshape(Var a, Shape shape) {
  check(a);
  Tensor<T> Y = value(a);
  Y.reshape(std::move(shape));
  Var out = push(std::move(Y), needs(a));
  set_backward(out, [this, a, out] {
    const auto& dY = out_grad(out);
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += dY[i];
  });
  return out;
}

template <typename T>
Var Tape<T>::select_rows(Var a, Var row, std::span<const std::uint8_t> flags) {
  check(a);
  check(row);
  const auto& A = value(a);
  const auto& R = value(row);
  const std::size_t rows = A.rows(), cols = A.cols();
  require(R.size() == cols && flags.size() == rows, "select_rows", A.shape(), R.shape());
  Tensor<T> Y(A.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(flags[r] ? R.data() : A.data() + r * cols, cols, Y.data() + r * cols);
  }
  Var out = push(std::move(Y), needs(a) || needs(row));
  std::vector<std::uint8_t> fl(flags.begin(), flags.end());
  set_backward(out, [this, a, row, out, fl = std::move(fl), rows, cols] {
    const auto& dY = out_grad(out);
    T* gA = needs(a) ? grad_ref(a).data() : nullptr;
    T* gR = needs(row) ? grad_ref(row).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      T* dst = fl[r] ? gR : (gA ? gA + r * cols : nullptr);
      if (!dst) continue;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += dY[r * cols + c];
    }
  });
  return out;
}

template <typename T>
Var Tape<T>::sum(Var a) {
  check(a);
  const auto& A = value(a);
  T s = 0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A[i];
  Var out = push(Tensor<T>({1}, std::vector<T>{s}), needs(a));
  set_backward(out, [this, a, out] {
    const T d = out_grad(out)[0];
    auto& g = grad_ref(a);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
  });
  return out;
}

template <typename T>
Var Tape<T>::mean(Var a) {
  check(a);
  const std::size_t n = value(a).size();
  if (n == 0) {
    throw ShapeError("mean of an empty array");
  }
  return scale(sum(a), T(1) / static_cast<T>(n));
}

template class Tape<float>;
template class Tape<double>;

}  // namespace craft::nn
