#include "craft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace craft::nn {

namespace {

double evaluate(const ObjectiveBuilder& objective) {
  Tape<double> tape(false);
  const Var out = objective(tape);
  const auto& v = tape.value(out);
  if (v.size() != 1 || !std::isfinite(v[0])) {
    throw std::domain_error("grad_check: objective is not a finite scalar");
  }
  return v[0];
}

}  // namespace

GradCheckResult grad_check(const ObjectiveBuilder& objective,
                           std::span<ParamGroup<double>*> params,
                           const GradCheckOptions& options) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape(true);
    const Var out = objective(tape);
    const auto& v = tape.value(out);
    if (v.size() != 1 || !std::isfinite(v[0])) {
      throw std::domain_error("grad_check: objective is not a finite scalar");
    }
    tape.backward(out);
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (auto* p : params) {
    if (p->frozen) continue;
    const Tensor<double> analytic = p->grad;
    std::vector<std::size_t> entries(p->value.size());
    std::iota(entries.begin(), entries.end(), std::size_t{0});
    if (entries.size() > options.max_entries_per_group) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_group);
    }
    GradCheckGroup g{p->name, entries.size(), 0.0};
    for (std::size_t i : entries) {
      const double saved = p->value[i];
      p->value[i] = saved + options.eps;
      const double f_plus = evaluate(objective);
      p->value[i] = saved - options.eps;
      const double f_minus = evaluate(objective);
      p->value[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * options.eps);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      g.max_rel_error = std::max(g.max_rel_error, std::abs(analytic[i] - numeric) / denom);
    }
    result.max_rel_error = std::max(result.max_rel_error, g.max_rel_error);
    result.groups.push_back(std::move(g));
    p->zero_grad();
  }
  return result;
}

}  // namespace craft::nn
