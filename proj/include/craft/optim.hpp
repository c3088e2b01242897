#pragma once

#include <cmath>
#include <span>

#include "craft/autodiff.hpp"

namespace craft::nn {

struct AdamSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update applied in place; gradients are cleared after.
/// Frozen groups are skipped and frozen rows receive a zero gradient.
template <typename T>
void adam_step(std::span<ParamGroup<T>*> groups, const AdamSettings& s, std::size_t step) {
  if (step == 0) {
    throw std::invalid_argument("adam_step: step count starts at 1");
  }
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T step_size = static_cast<T>(s.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(s.eps);
  for (ParamGroup<T>* p : groups) {
    if (p->frozen) {
      p->zero_grad();
      continue;
    }
    const std::size_t cols = p->value.cols();
    for (std::size_t r : p->frozen_rows) {
      std::fill_n(p->grad.data() + r * cols, cols, T{0});
    }
    T* w = p->value.data();
    T* g = p->grad.data();
    T* m = p->m.data();
    T* v = p->v.data();
    for (std::size_t i = 0, n = p->value.size(); i < n; ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
      g[i] = T{0};
    }
  }
}

}  // namespace craft::nn
