#pragma once

#include <vector>

#include "owdetr/model/config.hpp"
#include "owdetr/model/layers.hpp"

namespace owdetr::model {

// Per-level [D x h_l x w_l] maps, ordered fine to coarse.
struct MultiScaleFeatures {
  std::vector<Tensor> levels;

  std::size_t num_levels() const { return levels.size(); }
  std::size_t height(std::size_t l) const { return levels[l].dim(1); }
  std::size_t width(std::size_t l) const { return levels[l].dim(2); }
};

struct BackboneOutput {
  MultiScaleFeatures features;
  Tensor raw;  // [D' x h x w] post-activation map feeding the attention map
};

// Strided 3x3 conv stack (stride 2 per stage, ReLU) with 1x1 projections of
// stages 1..L to D channels.
struct Backbone {
  std::vector<Tensor> conv_weight;
  std::vector<Tensor> conv_bias;
  std::vector<Tensor> proj_weight;
  std::vector<Tensor> proj_bias;
  std::size_t attention_stage = 1;

  static Backbone make(const ModelConfig& cfg, Rng& rng);
  BackboneOutput forward(const Tensor& pixels) const;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

// Channel mean of a [C x h x w] map; plain values, no graph.
Tensor attention_map(const Tensor& raw);

// Optional capture of intermediate deformable-attention values.
struct DeformableTrace {
  Tensor weights;    // [N x heads*L*P], softmax-normalized per head
  Tensor locations;  // [N*heads*L*P x 2] sampling points, level pixel units
};

// Multi-scale deformable attention: each query attends to P learned sampling
// points per head and level around its reference point.
struct DeformableAttention {
  std::size_t heads = 1;
  std::size_t levels = 1;
  std::size_t points = 1;
  Linear offsets;  // D -> heads*L*P*2, columns ((h*L + l)*P + p)*2 + {x, y}
  Linear weights;  // D -> heads*L*P
  Linear value;    // D -> D
  Linear output;   // D -> D

  static DeformableAttention make(std::size_t d, std::size_t heads,
                                  std::size_t levels, std::size_t points,
                                  Rng& rng);
  // queries [N x D], ref_points [N x 2] normalized (x, y).
  Tensor forward(const Tensor& queries, const Tensor& ref_points,
                 const MultiScaleFeatures& features,
                 DeformableTrace* trace = nullptr) const;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct SelfAttention {
  std::size_t heads = 1;
  Linear query, key, value, output;

  static SelfAttention make(std::size_t d, std::size_t heads, Rng& rng);
  Tensor forward(const Tensor& x) const;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct EncoderLayer {
  DeformableAttention attn;
  LayerNorm norm1;
  FeedForward ffn;
  LayerNorm norm2;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct DecoderLayer {
  SelfAttention self_attn;
  LayerNorm norm1;
  DeformableAttention cross_attn;
  LayerNorm norm2;
  FeedForward ffn;
  LayerNorm norm3;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct DecoderOutput {
  Tensor embeddings;        // q_e, [M x D]
  Tensor reference_logits;  // [M x 2], pre-sigmoid
  Tensor reference_points;  // [M x 2]
};

struct Transformer {
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  Tensor query_embed;  // [M x D] learnable object queries
  Linear reference;    // D -> 2, followed by sigmoid

  static Transformer make(const ModelConfig& cfg, Rng& rng);
  // Encoder memory in the same multi-scale layout as the input.
  MultiScaleFeatures encode(const MultiScaleFeatures& features) const;
  DecoderOutput decode(const MultiScaleFeatures& memory) const;
  DecoderOutput forward(const MultiScaleFeatures& features) const;
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

// Distance of predicted box coordinates from 0 and 1.
inline constexpr double kBoxMargin = 1e-6;

struct HeadOutputs {
  Tensor class_logits;       // [M x (1 + n_known)], column 0 = unknown
  Tensor objectness_logits;  // [M x 1]
  Tensor objectness;         // [M], sigmoid of the logits
  Tensor boxes;              // [M x 4] normalized (cx, cy, w, h)

  std::size_t num_queries() const { return boxes.dim(0); }
  std::size_t num_known() const { return class_logits.dim(1) - 1; }
};

struct Heads {
  Linear classifier;  // D -> 1 + n_known
  Linear objectness;  // D -> 1
  Linear box1, box2, box3;

  static Heads make(std::size_t d, std::size_t n_known, Rng& rng);
  // Box centers are predicted as offsets from the reference points in logit
  // space; without reference logits the boxes are absolute.
  HeadOutputs forward(const Tensor& q_e, const Tensor& reference_logits = {}) const;
  // Appends `n_new` classifier outputs initialized from small seeded noise.
  void grow(std::size_t n_new, Rng& rng);
  std::size_t num_known() const { return classifier.out_features() - 1; }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct ForwardResult {
  BackboneOutput backbone;
  Tensor attention;  // [h x w]
  DecoderOutput decoder;
  HeadOutputs heads;
};

class Network {
 public:
  Network(const ModelConfig& cfg, std::size_t n_known);

  const ModelConfig& config() const { return cfg_; }
  std::size_t num_known() const { return heads_.num_known(); }

  ForwardResult forward(const Tensor& pixels) const;

  Backbone& backbone() { return backbone_; }
  Transformer& transformer() { return transformer_; }
  Heads& heads() { return heads_; }
  const Backbone& backbone() const { return backbone_; }
  const Transformer& transformer() const { return transformer_; }
  const Heads& heads() const { return heads_; }

  void grow_classifier(std::size_t n_new, Rng& rng) { heads_.grow(n_new, rng); }
  // Stable name order: backbone.*, transformer.*, heads.*.
  void visit(const ParameterVisitor& fn);
  std::size_t parameter_count();

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  Transformer transformer_;
  Heads heads_;
};

}  // namespace owdetr::model
