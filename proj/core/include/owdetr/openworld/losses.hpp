#pragma once

#include <span>

#include "owdetr/data/types.hpp"
#include "owdetr/matching/matching.hpp"
#include "owdetr/numerics/tensor.hpp"

namespace owdetr::openworld {

using numerics::Tensor;

// Sigmoid focal loss summed over all entries and divided by the number of
// rows with a positive target (at least 1). targets[i] is the positive
// column of row i or a negative value for an all-negative row. Positives are
// weighted by alpha_bal and negatives by 1 - alpha_bal; alpha_bal outside
// (0, 1) disables the weighting.
Tensor focal_loss(const Tensor& logits, std::span<const int> targets,
                  double gamma = 2.0, double alpha_bal = 0.25);

// Per-row GIoU of [N x 4] cxcywh boxes, as a differentiable [N x 1] tensor.
Tensor giou_rows(const Tensor& a, const Tensor& b);

struct BoxLoss {
  Tensor l1;     // mean over pairs of the L1 distance
  Tensor giou;   // mean over pairs of 1 - GIoU
  Tensor total;  // l1_weight * l1 + giou_weight * giou
};

// Regression loss over matched pairs; all terms are 0 without matches.
BoxLoss l1_box_loss(const Tensor& pred_boxes, std::span<const data::Instance> gts,
                    const matching::MatchResult& match, double l1_weight = 5.0,
                    double giou_weight = 2.0);

// L_n + L_r + alpha * L_o. Throws DivergenceError on a non-finite term.
Tensor joint_loss(const Tensor& novelty, const Tensor& regression,
                  const Tensor& objectness, double alpha = 0.1);

}  // namespace owdetr::openworld
