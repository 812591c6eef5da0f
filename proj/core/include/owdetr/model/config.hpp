#pragma once

#include <cstddef>
#include <cstdint>

namespace owdetr::model {

// Network sizes. The reference architecture uses D = 256 and M = 100; the
// defaults here are the desk-scale ones.
struct ModelConfig {
  std::size_t d_model = 32;      // D
  std::size_t num_queries = 20;  // M
  std::size_t num_levels = 2;    // L
  std::size_t num_points = 4;    // P, per head and level
  std::size_t num_heads = 2;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t ffn_dim = 64;
  std::size_t backbone_width = 8;  // channels of the first conv stage, doubled per stage
  // Backbone stage whose post-ReLU output feeds the attention map. Stage s has
  // stride 2^(s+1); stage 1 is the finest one that also feeds a level.
  std::size_t attention_stage = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t head_dim() const { return d_model / num_heads; }
  std::size_t num_stages() const { return num_levels + 1; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

ModelConfig reference_model_config();

}  // namespace owdetr::model
