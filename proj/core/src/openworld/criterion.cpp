#include "owdetr/openworld/criterion.hpp"

namespace owdetr::openworld {

ImageLoss compute_image_loss(const model::ForwardResult& forward,
                             std::span<const Instance> gts,
                             const data::ClassIndex& classes,
                             const LossConfig& config) {
  const auto& heads = forward.heads;
  ImageLoss out;
  {
    const auto cost = matching::build_cost_matrix(heads, gts, classes, config.cost);
    out.match = matching::hungarian_assign(cost);
  }
  if (config.novelty || config.objectness) {
    out.pseudo = select_pseudo_unknowns(heads, out.match, forward.attention, config.k_u,
                                        config.window);
  }
  out.targets = build_training_targets(out.match, gts, out.pseudo, heads.num_queries());

  const auto cls = class_columns(out.targets, classes, config.novelty);
  out.novelty = focal_loss(heads.class_logits, cls, config.gamma, config.alpha_bal);
  out.regression = l1_box_loss(heads.boxes, gts, out.match, config.l1_weight,
                               config.giou_weight)
                       .total;
  if (config.objectness) {
    const auto obj = objectness_columns(out.targets);
    out.objectness =
        focal_loss(heads.objectness_logits, obj, config.gamma, config.alpha_bal);
  } else {
    out.objectness = Tensor::scalar(0.0);
  }
  out.total = joint_loss(out.novelty, out.regression, out.objectness, config.alpha);
  return out;
}

}  // namespace owdetr::openworld
