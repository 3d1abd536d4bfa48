#include "vaest/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace vaest {

namespace {

double eval_loss(const LossFn& f, const std::vector<TensorPtr>& params) {
  Graph g;
  g.set_grad_enabled(false);
  return f(g, params)->value();
}

}  // namespace

GradCheckResult gradient_check(const LossFn& f, const std::vector<TensorPtr>& params,
                               double h, double tol) {
  for (const auto& p : params) {
    if (!p->requires_grad()) {
      throw std::invalid_argument("gradient_check: all parameters must require grad");
    }
    p->zero_grad();
  }

  // Analytic pass.
  {
    Graph g;
    auto loss = f(g, params);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& a = analytic[i];
    a.assign(params[i]->size(), 0.0);
    if (params[i]->has_grad()) {
      auto gr = params[i]->grad();
      a.assign(gr.begin(), gr.end());
    }
  }

  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i]->mut_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + h;
      const double up = eval_loss(f, params);
      data[j] = saved - h;
      const double down = eval_loss(f, params);
      data[j] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double rel =
          std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      ++res.checked;
      if (rel > tol) ++res.flagged;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = i;
        res.worst_coord = j;
        res.analytic_at_worst = a;
        res.numeric_at_worst = numeric;
      }
    }
  }
  return res;
}

}  // namespace vaest
