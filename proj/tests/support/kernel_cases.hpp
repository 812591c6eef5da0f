#pragma once

#include <functional>
#include <vector>

#include "gradcheck.hpp"

namespace owdetr::testing {

namespace nm = numerics;
using numerics::Tensor;

struct KernelCase {
  const char* name;
  double tol;  // 1e-6 for piecewise-linear kernels
  std::function<Tensor(const std::vector<Tensor>&)> f;
  std::function<std::vector<Tensor>(nm::Rng&)> inputs;
};

// Inputs kept away from kinks of abs/relu/min/max.
inline Tensor away_from_zero(nm::Shape shape, nm::Rng& rng) {
  auto t = random_tensor(std::move(shape), rng);
  for (auto& v : t.mutable_data()) v = v < 0 ? v - 0.1 : v + 0.1;
  return t;
}

inline auto two(nm::Shape a, nm::Shape b) {
  return [a, b](nm::Rng& rng) {
    return std::vector<Tensor>{random_tensor(a, rng), random_tensor(b, rng)};
  };
}
inline auto one(nm::Shape a) {
  return [a](nm::Rng& rng) { return std::vector<Tensor>{random_tensor(a, rng)}; };
}

// One case per differentiable kernel.
inline const std::vector<KernelCase>& kernel_cases() {
  static const std::vector<KernelCase> cases = {
    {"matmul", 1e-6, [](const auto& in) { return probe(nm::matmul(in[0], in[1])); },
     two({4, 5}, {5, 3})},
    {"conv2d_bias", 1e-6,
     [](const auto& in) { return probe(nm::conv2d(in[0], in[1], in[2], 1, 1)); },
     [](nm::Rng& rng) {
       return std::vector<Tensor>{random_tensor({2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                                  random_tensor({3}, rng)};
     }},
    {"conv2d_stride2", 1e-6, [](const auto& in) { return probe(nm::conv2d(in[0], in[1], 2, 0)); },
     two({2, 5, 5}, {3, 2, 3, 3})},
    {"bilinear_sample", 1e-6,
     [](const auto& in) { return probe(nm::bilinear_sample(in[0], in[1])); },
     [](nm::Rng& rng) {
       auto feature = random_tensor({2, 4, 5}, rng);
       std::vector<double> pts;
       for (int p = 0; p < 6; ++p) {
         pts.push_back(rng.uniform(0.7, 4.3));
         pts.push_back(rng.uniform(0.7, 3.3));
       }
       return std::vector<Tensor>{feature, Tensor::from({6, 2}, pts, true)};
     }},

    {"add", 1e-6, [](const auto& in) { return probe(nm::add(in[0], in[1])); }, two({3, 4}, {3, 4})},
    {"add_bias", 1e-6, [](const auto& in) { return probe(nm::add(in[0], in[1])); }, two({3, 4}, {4})},
    {"add_rank3", 1e-6, [](const auto& in) { return probe(nm::add(in[0], in[1])); },
     two({2, 3, 4}, {3, 4})},
    {"sub", 1e-6, [](const auto& in) { return probe(nm::sub(in[0], in[1])); }, two({3, 4}, {4})},
    {"mul", 1e-6, [](const auto& in) { return probe(nm::mul(in[0], in[1])); }, two({3, 4}, {3, 4})},
    {"div", 1e-4, [](const auto& in) { return probe(nm::div(in[0], in[1])); },
     [](nm::Rng& rng) {
       return std::vector<Tensor>{random_tensor({3, 4}, rng), random_tensor({3, 4}, rng, 0.5, 2.0)};
     }},
    {"minimum", 1e-6, [](const auto& in) { return probe(nm::minimum(in[0], in[1])); },
     two({3, 4}, {3, 4})},
    {"maximum", 1e-6, [](const auto& in) { return probe(nm::maximum(in[0], in[1])); },
     two({3, 4}, {3, 4})},
    {"scale", 1e-6, [](const auto& in) { return probe(nm::scale(in[0], -2.5)); }, one({5})},
    {"add_scalar", 1e-6, [](const auto& in) { return probe(nm::add_scalar(in[0], 0.7)); }, one({5})},
    {"neg", 1e-6, [](const auto& in) { return probe(nm::neg(in[0])); }, one({2, 3})},
    {"abs", 1e-6, [](const auto& in) { return probe(nm::abs(in[0])); },
     [](nm::Rng& rng) { return std::vector<Tensor>{away_from_zero({3, 3}, rng)}; }},
    {"relu", 1e-6, [](const auto& in) { return probe(nm::relu(in[0])); },
     [](nm::Rng& rng) { return std::vector<Tensor>{away_from_zero({3, 3}, rng)}; }},
    {"sigmoid", 1e-4, [](const auto& in) { return probe(nm::sigmoid(in[0])); }, one({3, 4})},
    {"softmax_rows", 1e-4, [](const auto& in) { return probe(nm::softmax(in[0])); }, one({3, 5})},
    {"layer_norm", 1e-4,
     [](const auto& in) { return probe(nm::layer_norm(in[0], in[1], in[2])); },
     [](nm::Rng& rng) {
       return std::vector<Tensor>{random_tensor({3, 6}, rng), random_tensor({6}, rng),
                                  random_tensor({6}, rng)};
     }},
    {"sum", 1e-6, [](const auto& in) { return nm::scale(nm::sum(in[0]), 1.3); }, one({2, 3, 2})},
    {"mean", 1e-6, [](const auto& in) { return nm::scale(nm::mean(in[0]), 1.3); }, one({4, 3})},
    {"sum_last", 1e-6, [](const auto& in) { return probe(nm::sum_last(in[0])); }, one({2, 3, 4})},
    {"reshape", 1e-6, [](const auto& in) { return probe(nm::reshape(in[0], {3, 4})); }, one({2, 6})},
    {"transpose", 1e-6, [](const auto& in) { return probe(nm::transpose(in[0])); }, one({3, 5})},
    {"batched_matmul", 1e-6, [](const auto& in) { return probe(nm::batched_matmul(in[0], in[1])); },
     two({2, 3, 4}, {2, 4, 2})},
    {"slice_rows", 1e-6, [](const auto& in) { return probe(nm::slice_rows(in[0], 1, 2)); },
     one({4, 3})},
    {"slice_cols", 1e-6, [](const auto& in) { return probe(nm::slice_cols(in[0], 1, 2)); },
     one({3, 4})},
    {"concat_rows", 1e-6,
     [](const auto& in) { return probe(nm::concat_rows(std::span<const Tensor>(in))); },
     two({2, 3}, {4, 3})},
    {"concat_cols", 1e-6,
     [](const auto& in) { return probe(nm::concat_cols(std::span<const Tensor>(in))); },
     two({3, 2}, {3, 4})},
    {"repeat_rows", 1e-6, [](const auto& in) { return probe(nm::repeat_rows(in[0], 3)); },
     one({2, 3})},
    {"gather_rows", 1e-6,
     [](const auto& in) {
       const std::vector<std::size_t> rows{2, 0, 2, 1};
       return probe(nm::gather_rows(in[0], rows));
     },
     one({3, 4})},
  };
  return cases;
}

}  // namespace owdetr::testing
