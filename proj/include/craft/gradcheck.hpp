#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "craft/autodiff.hpp"

namespace craft::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Groups larger than this are checked on a random subsample of this many
  /// entries.
  std::size_t max_entries_per_group = 200;
  std::uint64_t seed = 0;
};

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::vector<GradCheckGroup> groups;
};

/// Builds a scalar objective on the given tape. The builder is called once
/// with a recording tape and then repeatedly with non-recording tapes.
using ObjectiveBuilder = std::function<Var(Tape<double>&)>;

/// Compares reverse-mode gradients against central differences
/// (f(x + eps) - f(x - eps)) / (2 eps). Relative error denominators are
/// floored at 1e-8. Throws if the objective is non-finite.
GradCheckResult grad_check(const ObjectiveBuilder& objective,
                           std::span<ParamGroup<double>*> params,
                           const GradCheckOptions& options = {});

}  // namespace craft::nn
