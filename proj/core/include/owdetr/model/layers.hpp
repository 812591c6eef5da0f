#pragma once

#include <functional>
#include <string>

#include "owdetr/numerics/ops.hpp"
#include "owdetr/numerics/random.hpp"

namespace owdetr::model {

using numerics::Rng;
using numerics::Tensor;

// Callback used to enumerate parameters under stable dotted names. The
// reference lets callers replace a tensor (checkpoint restore).
using ParameterVisitor = std::function<void(const std::string& name, Tensor& t)>;

// Uniform Xavier init of a [rows x cols] matrix.
Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng);
// Zero-filled trainable tensor.
Tensor zeros_param(numerics::Shape shape);

// y = x W + b, W stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  static Linear make(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  static LayerNorm make(std::size_t dim);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

// Two-layer ReLU feed-forward block.
struct FeedForward {
  Linear in;
  Linear out;

  static FeedForward make(std::size_t dim, std::size_t hidden, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

}  // namespace owdetr::model
