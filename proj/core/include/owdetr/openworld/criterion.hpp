#pragma once

#include <span>

#include "owdetr/openworld/losses.hpp"
#include "owdetr/openworld/pseudo_label.hpp"

namespace owdetr::openworld {

struct LossConfig {
  matching::CostWeights cost;
  double l1_weight = 5.0;
  double giou_weight = 2.0;
  double gamma = 2.0;
  double alpha_bal = 0.25;
  double alpha = 0.1;  // weight of the objectness term
  std::size_t k_u = 5;
  WindowRule window = WindowRule::kCellCenter;
  bool novelty = true;     // pseudo-unknowns train classifier column 0
  bool objectness = true;  // objectness branch and its loss term

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

struct ImageLoss {
  Tensor total;
  Tensor novelty;
  Tensor regression;
  Tensor objectness;
  MatchResult match;
  PseudoLabelSet pseudo;
  TrainingTargets targets;
};

// Matching, pseudo-labeling and the joint loss for one image.
ImageLoss compute_image_loss(const model::ForwardResult& forward,
                             std::span<const Instance> gts,
                             const data::ClassIndex& classes,
                             const LossConfig& config);

}  // namespace owdetr::openworld
