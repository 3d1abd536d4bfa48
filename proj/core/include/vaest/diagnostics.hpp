#pragma once

#include <string>
#include <vector>

#include "vaest/gradcheck.hpp"

namespace vaest {

struct ModuleCheckReport {
  std::string module;
  std::size_t seeds = 0;
  std::size_t checked = 0;
  std::size_t flagged = 0;
  double max_rel_err = 0.0;
  GradCheckResult worst;  // the single worst seed's result

  bool pass() const { return flagged == 0; }
};

// Module names: gru, tcn, attention, gate, heads, semantic, ccc, kl,
// objective. "all" expands to every module, "loss" to {ccc, kl, objective}.
std::vector<std::string> expand_gradient_modules(const std::string& selector);

// Analytic versus central-difference gradients on reduced dimensions
// (T <= 5, feature dims <= 8), one independent model draw per seed.
ModuleCheckReport check_module_gradients(const std::string& module, std::size_t seeds = 20,
                                         double tol = 1e-4);

std::vector<ModuleCheckReport> run_gradient_suite(const std::vector<std::string>& modules,
                                                  std::size_t seeds = 20, double tol = 1e-4);

}  // namespace vaest
