#include "owdetr/protocol/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace owdetr::protocol {

using numerics::Tensor;
namespace {

// Carries moments across a change of the trailing dimension.
void regrow(Moments& mom, const numerics::Shape& shape) {
  const std::size_t n = numerics::shape_numel(shape);
  if (mom.shape.size() == 2 && shape.size() == 2 && mom.shape[0] == shape[0]) {
    const std::size_t rows = shape[0], old_cols = mom.shape[1], cols = shape[1];
    std::vector<double> m(n, 0.0), v(n, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < std::min(cols, old_cols); ++c) {
        m[r * cols + c] = mom.m[r * old_cols + c];
        v[r * cols + c] = mom.v[r * old_cols + c];
      }
    }
    mom.m = std::move(m);
    mom.v = std::move(v);
  } else {
    mom.m.resize(n, 0.0);
    mom.v.resize(n, 0.0);
  }
  mom.shape = shape;
}

}  // namespace

void Adam::step(model::Network& net, const AdamConfig& cfg, double grad_scale) {
  ++steps_;
  double scale = grad_scale;
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    net.visit([&](const std::string&, Tensor& p) {
      for (double g : p.grad()) sq += g * g;
    });
    const double norm = std::sqrt(sq) * grad_scale;
    if (norm > cfg.clip_norm) scale *= cfg.clip_norm / norm;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  net.visit([&](const std::string& name, Tensor& p) {
    Moments& mom = moments_[name];
    if (mom.shape != p.shape()) regrow(mom, p.shape());
    const auto grad = p.grad();
    auto theta = p.mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad[i] * scale + cfg.weight_decay * theta[i];
      mom.m[i] = cfg.beta1 * mom.m[i] + (1.0 - cfg.beta1) * g;
      mom.v[i] = cfg.beta2 * mom.v[i] + (1.0 - cfg.beta2) * g * g;
      theta[i] -= cfg.lr * (mom.m[i] / c1) / (std::sqrt(mom.v[i] / c2) + cfg.eps);
    }
    p.zero_grad();
  });
}

void Adam::restore(std::uint64_t steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

}  // namespace owdetr::protocol
