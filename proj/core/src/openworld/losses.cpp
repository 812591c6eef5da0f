#include "owdetr/openworld/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "owdetr/errors.hpp"
#include "owdetr/numerics/ops.hpp"

namespace owdetr::openworld {

namespace ops = numerics;

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor focal_loss(const Tensor& logits, std::span<const int> targets, double gamma,
                  double alpha_bal) {
  if (logits.rank() != 2) {
    throw DimensionError("focal_loss: logits must be [N x C], got " +
                         numerics::shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (targets.size() != n) {
    throw DimensionError("focal_loss: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(n) + " rows");
  }
  std::size_t positives = 0;
  for (int t : targets) {
    if (t >= static_cast<int>(c)) {
      throw ContractError("focal_loss: target column " + std::to_string(t) +
                          " out of range");
    }
    if (t >= 0) ++positives;
  }
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(positives, 1));
  const bool balanced = alpha_bal > 0.0 && alpha_bal < 1.0;

  // With z = (2y - 1) x: L = a * s(-z)^g * softplus(-z),
  // dL/dz = -a * s(-z)^g * (g * s(z) * softplus(-z) + s(-z)).
  const auto x = logits.data();
  std::vector<double> dx(n * c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const bool positive = targets[i] == static_cast<int>(j);
      const double sign = positive ? 1.0 : -1.0;
      const double a = balanced ? (positive ? alpha_bal : 1.0 - alpha_bal) : 1.0;
      const double z = sign * x[i * c + j];
      const double q = sigmoid(-z);
      const double sp = softplus(-z);
      const double mod = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
      total += a * mod * sp;
      dx[i * c + j] = -sign * a * mod * (gamma * sigmoid(z) * sp + q) * norm;
    }
  }
  return numerics::make_result(
      {1}, {total * norm}, {logits},
      [logits, dx = std::move(dx)](const numerics::Node& out) {
        auto& g = logits.node()->ensure_grad();
        const double up = out.grad[0];
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += up * dx[k];
      },
      "focal_loss");
}

Tensor giou_rows(const Tensor& a, const Tensor& b) {
  auto col = [](const Tensor& t, std::size_t j) { return ops::slice_cols(t, j, 1); };
  auto corners = [&](const Tensor& t) {
    const Tensor cx = col(t, 0), cy = col(t, 1);
    const Tensor hw = ops::scale(col(t, 2), 0.5), hh = ops::scale(col(t, 3), 0.5);
    return std::array<Tensor, 4>{ops::sub(cx, hw), ops::sub(cy, hh), ops::add(cx, hw),
                                 ops::add(cy, hh)};
  };
  const auto pa = corners(a);
  const auto pb = corners(b);
  const Tensor iw = ops::relu(ops::sub(ops::minimum(pa[2], pb[2]), ops::maximum(pa[0], pb[0])));
  const Tensor ih = ops::relu(ops::sub(ops::minimum(pa[3], pb[3]), ops::maximum(pa[1], pb[1])));
  const Tensor inter = ops::mul(iw, ih);
  const Tensor area_a = ops::mul(col(a, 2), col(a, 3));
  const Tensor area_b = ops::mul(col(b, 2), col(b, 3));
  const Tensor uni = ops::sub(ops::add(area_a, area_b), inter);
  const Tensor ew = ops::sub(ops::maximum(pa[2], pb[2]), ops::minimum(pa[0], pb[0]));
  const Tensor eh = ops::sub(ops::maximum(pa[3], pb[3]), ops::minimum(pa[1], pb[1]));
  const Tensor enclosing = ops::mul(ew, eh);
  return ops::sub(ops::div(inter, uni), ops::div(ops::sub(enclosing, uni), enclosing));
}

BoxLoss l1_box_loss(const Tensor& pred_boxes, std::span<const data::Instance> gts,
                    const matching::MatchResult& match, double l1_weight,
                    double giou_weight) {
  if (match.pairs.empty()) {
    const Tensor zero = Tensor::scalar(0.0);
    return {zero, zero, zero};
  }
  std::vector<std::size_t> rows;
  std::vector<double> target;
  for (const auto& [q, g] : match.pairs) {
    rows.push_back(q);
    const auto& b = gts[g].box;
    target.insert(target.end(), {b.cx, b.cy, b.w, b.h});
  }
  const double k = static_cast<double>(rows.size());
  const Tensor pred = ops::gather_rows(pred_boxes, rows);
  const Tensor tgt = Tensor::from({rows.size(), 4}, std::move(target));
  BoxLoss out;
  out.l1 = ops::scale(ops::sum(ops::abs(ops::sub(pred, tgt))), 1.0 / k);
  out.giou = ops::scale(ops::sum(ops::add_scalar(ops::neg(giou_rows(pred, tgt)), 1.0)),
                        1.0 / k);
  out.total = ops::add(ops::scale(out.l1, l1_weight), ops::scale(out.giou, giou_weight));
  return out;
}

Tensor joint_loss(const Tensor& novelty, const Tensor& regression, const Tensor& objectness,
                  double alpha) {
  const std::pair<const char*, const Tensor*> terms[] = {
      {"L_n", &novelty}, {"L_r", &regression}, {"L_o", &objectness}};
  for (const auto& [name, t] : terms) {
    if (t->numel() != 1) {
      throw DimensionError(std::string("joint_loss: ") + name + " must be a scalar");
    }
    if (!std::isfinite(t->item())) {
      throw DivergenceError(std::string("joint_loss: ") + name + " is not finite (" +
                            std::to_string(t->item()) + ")");
    }
  }
  return ops::add(ops::add(novelty, regression), ops::scale(objectness, alpha));
}

}  // namespace owdetr::openworld
