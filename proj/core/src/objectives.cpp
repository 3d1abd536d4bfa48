#include "vaest/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vaest {

double ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("ccc: length mismatch " + std::to_string(x.size()) + " vs " +
                                std::to_string(y.size()));
  }
  if (x.size() < 2) throw std::invalid_argument("ccc: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  const double mx = sx / n, my = sy / n;
  const double vx = sxx / n - mx * mx;
  const double vy = syy / n - my * my;
  const double cov = sxy / n - mx * my;
  const double gap = mx - my;
  const double denom = vx + vy + gap * gap;
  if (denom == 0.0) return 1.0;  // both constant and equal
  return 2.0 * cov / denom;
}

namespace {

// Differentiable concordance for one column pair [N x 1].
TensorPtr ccc_node(Graph& g, const TensorPtr& x, const TensorPtr& y) {
  auto mx = g.mean(x);
  auto my = g.mean(y);
  auto vx = g.sub(g.mean(g.square(x)), g.square(mx));
  auto vy = g.sub(g.mean(g.square(y)), g.square(my));
  auto cov = g.sub(g.mean(g.mul(x, y)), g.mul(mx, my));
  auto denom = g.add(g.add(vx, vy), g.square(g.sub(mx, my)));
  return g.div(g.scale(cov, 2.0), denom);
}

void check_va_pair(const char* op, const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 2 || pred.shape()[1] != 2 || pred.shape() != target.shape()) {
    throw std::invalid_argument(std::string(op) + ": expected matching [N x 2] tensors, got " +
                                shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  if (pred.shape()[0] < 2) {
    throw std::invalid_argument(std::string(op) + ": need at least 2 rows");
  }
}

}  // namespace

CccLossParts ccc_loss_parts(Graph& g, const TensorPtr& pred, const TensorPtr& target) {
  check_va_pair("ccc_loss", *pred, *target);
  CccLossParts parts;
  parts.ccc_v = ccc_node(g, g.slice_cols(pred, 0, 1), g.slice_cols(target, 0, 1));
  parts.ccc_a = ccc_node(g, g.slice_cols(pred, 1, 2), g.slice_cols(target, 1, 2));
  parts.loss = g.sub(Tensor::scalar(1.0), g.scale(g.add(parts.ccc_v, parts.ccc_a), 0.5));
  return parts;
}

TensorPtr ccc_loss(Graph& g, const TensorPtr& pred, const TensorPtr& target) {
  return ccc_loss_parts(g, pred, target).loss;
}

TensorPtr kl_loss(Graph& g, const TensorPtr& soft_targets, const TensorPtr& predicted) {
  if (soft_targets->rank() != 2 || predicted->shape() != soft_targets->shape()) {
    throw std::invalid_argument("kl_loss: expected matching [N x K] tensors, got " +
                                shape_str(soft_targets->shape()) + " vs " +
                                shape_str(predicted->shape()));
  }
  const std::size_t n = soft_targets->shape()[0], k = soft_targets->shape()[1];
  auto w = soft_targets->data();
  auto p = predicted->data();
  double target_entropy = 0.0;  // sum_rows sum_i w log w, with 0 log 0 = 0
  for (std::size_t r = 0; r < n; ++r) {
    double ws = 0.0, ps = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double wv = w[r * k + j], pv = p[r * k + j];
      if (wv < 0.0) throw std::invalid_argument("kl_loss: negative target weight");
      if (!(pv > 0.0)) {
        throw std::invalid_argument("kl_loss: predicted row " + std::to_string(r) +
                                    " is not strictly positive");
      }
      ws += wv;
      ps += pv;
      if (wv > 0.0) target_entropy += wv * std::log(wv);
    }
    if (std::fabs(ws - 1.0) > 1e-6 || std::fabs(ps - 1.0) > 1e-6) {
      throw std::invalid_argument("kl_loss: row " + std::to_string(r) +
                                  " is not a probability distribution");
    }
  }
  // KL = (1/N) [sum w log w - sum w log p]; only the cross term needs grads.
  auto cross = g.sum(g.mul(soft_targets, g.log(predicted)));
  return g.add(g.scale(cross, -1.0 / static_cast<double>(n)),
               Tensor::scalar(target_entropy / static_cast<double>(n)));
}

LossBreakdown total_loss(Graph& g, const TensorPtr& pred_va, const TensorPtr& target_va,
                         const TensorPtr& pred_dist, const TensorPtr& soft_targets,
                         double lambda) {
  if (!(lambda >= 0.0)) {
    throw std::invalid_argument("total_loss: lambda must be non-negative, got " +
                                std::to_string(lambda));
  }
  auto parts = ccc_loss_parts(g, pred_va, target_va);
  auto kl = kl_loss(g, soft_targets, pred_dist);
  LossBreakdown out;
  out.total_node = g.add(parts.loss, g.scale(kl, lambda));
  out.ccc_loss = parts.loss->value();
  out.kl_loss = kl->value();
  out.total = out.total_node->value();
  out.ccc_valence = parts.ccc_v->value();
  out.ccc_arousal = parts.ccc_a->value();
  return out;
}

}  // namespace vaest
