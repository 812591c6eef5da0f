#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "owdetr/model/network.hpp"

namespace owdetr::protocol {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // L2 term added to the gradient
  double clip_norm = 0.0;      // global gradient-norm clip, 0 disables

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct Moments {
  numerics::Shape shape;
  std::vector<double> m;
  std::vector<double> v;

  friend bool operator==(const Moments&, const Moments&) = default;
};

class Adam {
 public:
  // One update of every parameter of the network from its accumulated
  // gradient, scaled by grad_scale. Moments of a tensor whose columns grew
  // are kept for the old columns and zero for the new ones.
  void step(model::Network& net, const AdamConfig& cfg, double grad_scale = 1.0);

  std::uint64_t steps() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::uint64_t steps, std::map<std::string, Moments> moments);

  friend bool operator==(const Adam&, const Adam&) = default;

 private:
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace owdetr::protocol
