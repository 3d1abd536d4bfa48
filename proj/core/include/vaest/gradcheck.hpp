#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "vaest/graph.hpp"
#include "vaest/tensor.hpp"

namespace vaest {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t flagged = 0;  // coordinates whose relative error exceeded the tolerance
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;

  bool pass() const { return flagged == 0; }
};

// Builds a scalar loss from `params` on a fresh graph. Must be deterministic
// in the parameter values; it is invoked once with recording on and twice per
// coordinate with recording off.
using LossFn = std::function<TensorPtr(Graph&, const std::vector<TensorPtr>&)>;

// Compares reverse-mode gradients of f against central differences
// (f(x + h e) - f(x - h e)) / 2h on every coordinate of every parameter.
// Relative error is |a - n| / max(1, |a|, |n|).
GradCheckResult gradient_check(const LossFn& f, const std::vector<TensorPtr>& params,
                               double h = 1e-5, double tol = 1e-4);

}  // namespace vaest
