#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "owdetr/numerics/ops.hpp"
#include "owdetr/numerics/random.hpp"
#include "owdetr/numerics/tensor.hpp"

namespace owdetr::testing {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "input i, element j: analytic a, numeric n"
};

inline numerics::Tensor random_tensor(numerics::Shape shape, numerics::Rng& rng,
                                      double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numerics::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return numerics::Tensor::from(std::move(shape), std::move(v), true);
}

// Central differences with step h against the taped gradient of f. The error
// of one element is |a - n| / max(1, |a|, |n|).
inline GradcheckResult gradcheck(
    const std::function<numerics::Tensor(const std::vector<numerics::Tensor>&)>& f,
    std::vector<numerics::Tensor> inputs, double h = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  numerics::backward(f(inputs));
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  GradcheckResult out;
  numerics::NoGradGuard guard;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto data = inputs[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + h;
      const double up = f(inputs).item();
      data[j] = saved - h;
      const double down = f(inputs).item();
      data[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i][j];
      const double err =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++out.checked;
      if (err >= out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = "input " + std::to_string(i) + ", element " + std::to_string(j) +
                    ": analytic " + std::to_string(a) + ", numeric " + std::to_string(numeric);
      }
    }
  }
  return out;
}

// Weighted sum with fixed random weights, so every output element matters.
inline numerics::Tensor probe(const numerics::Tensor& y, std::uint64_t seed = 99) {
  numerics::Rng rng(seed);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  auto wt = numerics::Tensor::from(y.shape(), std::move(w));
  return numerics::sum(numerics::mul(y, wt));
}

}  // namespace owdetr::testing
