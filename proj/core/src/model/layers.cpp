#include "owdetr/model/layers.hpp"

#include <cmath>

#include "owdetr/model/config.hpp"
#include "owdetr/errors.hpp"

namespace owdetr::model {

using namespace numerics;

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-a, a);
  return Tensor::from({rows, cols}, std::move(v), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Linear Linear::make(std::size_t in, std::size_t out, Rng& rng) {
  return {xavier(in, out, rng), zeros_param({out})};
}

Tensor Linear::operator()(const Tensor& x) const {
  return add(matmul(x, weight), bias);
}

void Linear::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

LayerNorm LayerNorm::make(std::size_t dim) {
  return {Tensor::full({dim}, 1.0, true), zeros_param({dim})};
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return layer_norm(x, gain, bias);
}

void LayerNorm::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".gain", gain);
  fn(prefix + ".bias", bias);
}

FeedForward FeedForward::make(std::size_t dim, std::size_t hidden, Rng& rng) {
  FeedForward f;
  f.in = Linear::make(dim, hidden, rng);
  f.out = Linear::make(hidden, dim, rng);
  return f;
}

Tensor FeedForward::operator()(const Tensor& x) const { return out(relu(in(x))); }

void FeedForward::visit(const std::string& prefix, const ParameterVisitor& fn) {
  in.visit(prefix + ".in", fn);
  out.visit(prefix + ".out", fn);
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* key) {
    if (v == 0) throw ConfigError(std::string("model.") + key + " must be positive");
  };
  positive(d_model, "d_model");
  positive(num_queries, "num_queries");
  positive(num_levels, "num_levels");
  positive(num_points, "num_points");
  positive(num_heads, "num_heads");
  positive(ffn_dim, "ffn_dim");
  positive(backbone_width, "backbone_width");
  if (d_model % num_heads != 0) {
    throw ConfigError("model.d_model must be divisible by model.num_heads");
  }
  if (attention_stage >= num_stages()) {
    throw ConfigError("model.attention_stage must be < num_levels + 1");
  }
}

ModelConfig reference_model_config() {
  ModelConfig cfg;
  cfg.d_model = 256;
  cfg.num_queries = 100;
  cfg.num_levels = 4;
  cfg.num_heads = 8;
  cfg.enc_layers = 6;
  cfg.dec_layers = 6;
  cfg.ffn_dim = 1024;
  return cfg;
}

}  // namespace owdetr::model
