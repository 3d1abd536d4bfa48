#pragma once

#include <span>

#include "vaest/graph.hpp"
#include "vaest/tensor.hpp"

namespace vaest {

// Lin's concordance correlation with population (1/N) moments. Identical
// constant sequences score 1; a constant against anything else scores 0.
double ccc(std::span<const double> x, std::span<const double> y);

struct CccLossParts {
  TensorPtr loss;   // scalar, 1 - (ccc_v + ccc_a) / 2
  TensorPtr ccc_v;  // scalar concordance on column 0
  TensorPtr ccc_a;  // scalar concordance on column 1
};

// pred, target: [N x 2] with N >= 2, columns (valence, arousal).
CccLossParts ccc_loss_parts(Graph& g, const TensorPtr& pred, const TensorPtr& target);
TensorPtr ccc_loss(Graph& g, const TensorPtr& pred, const TensorPtr& target);

// Forward KL, mean over rows of sum_i w_i (log w_i - log p_i). Targets may
// contain zeros (0 log 0 = 0); predictions must be strictly positive.
// Gradient flows into `predicted` only.
TensorPtr kl_loss(Graph& g, const TensorPtr& soft_targets, const TensorPtr& predicted);

struct LossBreakdown {
  double ccc_loss = 0.0;
  double kl_loss = 0.0;
  double total = 0.0;
  double ccc_valence = 0.0;
  double ccc_arousal = 0.0;
  TensorPtr total_node;  // differentiable total for the backward pass
};

LossBreakdown total_loss(Graph& g, const TensorPtr& pred_va, const TensorPtr& target_va,
                         const TensorPtr& pred_dist, const TensorPtr& soft_targets,
                         double lambda = 0.2);

}  // namespace vaest
