#include "owdetr/model/network.hpp"

#include <cmath>
#include <numbers>

#include "owdetr/errors.hpp"

namespace owdetr::model {

using namespace numerics;

namespace {

Tensor he_conv(std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in * k * k));
  std::vector<double> v(out * in * k * k);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from({out, in, k, k}, std::move(v), true);
}

// [D x h x w] -> [h*w x D]
Tensor to_tokens(const Tensor& map) {
  return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

// [h*w x D] -> [D x h x w]
Tensor to_map(const Tensor& tokens, std::size_t h, std::size_t w) {
  return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

}  // namespace

// ---------------------------------------------------------------- backbone

Backbone Backbone::make(const ModelConfig& cfg, Rng& rng) {
  Backbone b;
  b.attention_stage = cfg.attention_stage;
  std::size_t in = 3;
  for (std::size_t s = 0; s < cfg.num_stages(); ++s) {
    const std::size_t out = cfg.backbone_width << s;
    b.conv_weight.push_back(he_conv(out, in, 3, rng));
    b.conv_bias.push_back(zeros_param({out}));
    if (s >= 1) {
      b.proj_weight.push_back(he_conv(cfg.d_model, out, 1, rng));
      b.proj_bias.push_back(zeros_param({cfg.d_model}));
    }
    in = out;
  }
  return b;
}

BackboneOutput Backbone::forward(const Tensor& pixels) const {
  if (pixels.rank() != 3 || pixels.dim(0) != 3) {
    throw DimensionError("backbone: expected [3 x H x W] pixels, got " +
                         shape_str(pixels.shape()));
  }
  if (pixels.dim(1) < 16 || pixels.dim(2) < 16) {
    throw DimensionError("backbone: input " + shape_str(pixels.shape()) +
                         " is smaller than 16x16");
  }
  BackboneOutput out;
  Tensor x = pixels;
  for (std::size_t s = 0; s < conv_weight.size(); ++s) {
    x = relu(conv2d(x, conv_weight[s], conv_bias[s], 2, 1));
    if (s == attention_stage) out.raw = x;
    if (s >= 1) {
      out.features.levels.push_back(conv2d(x, proj_weight[s - 1], proj_bias[s - 1], 1, 0));
    }
  }
  return out;
}

void Backbone::visit(const std::string& prefix, const ParameterVisitor& fn) {
  for (std::size_t s = 0; s < conv_weight.size(); ++s) {
    const auto p = prefix + ".stage" + std::to_string(s);
    fn(p + ".weight", conv_weight[s]);
    fn(p + ".bias", conv_bias[s]);
  }
  for (std::size_t l = 0; l < proj_weight.size(); ++l) {
    const auto p = prefix + ".proj" + std::to_string(l);
    fn(p + ".weight", proj_weight[l]);
    fn(p + ".bias", proj_bias[l]);
  }
}

Tensor attention_map(const Tensor& raw) {
  if (raw.rank() != 3) {
    throw DimensionError("attention_map: expected [C x h x w], got " +
                         shape_str(raw.shape()));
  }
  const std::size_t c = raw.dim(0), plane = raw.dim(1) * raw.dim(2);
  std::vector<double> a(plane, 0.0);
  auto x = raw.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) a[i] += x[ch * plane + i];
  }
  for (auto& v : a) v /= static_cast<double>(c);
  return Tensor::from({raw.dim(1), raw.dim(2)}, std::move(a));
}

// ---------------------------------------------------- deformable attention

DeformableAttention DeformableAttention::make(std::size_t d, std::size_t heads,
                                              std::size_t levels,
                                              std::size_t points, Rng& rng) {
  DeformableAttention a;
  a.heads = heads;
  a.levels = levels;
  a.points = points;
  a.offsets = Linear::make(d, heads * levels * points * 2, rng);
  // Small weights plus a dispersed bias: head h points along angle 2*pi*h/H,
  // point p sits (p + 1) / 2 cells from the reference.
  for (auto& w : a.offsets.weight.mutable_data()) w *= 0.01;
  auto bias = a.offsets.bias.mutable_data();
  for (std::size_t h = 0; h < heads; ++h) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(h) /
                         static_cast<double>(heads);
    for (std::size_t l = 0; l < levels; ++l) {
      for (std::size_t p = 0; p < points; ++p) {
        const std::size_t col = ((h * levels + l) * points + p) * 2;
        const double radius = 0.5 * static_cast<double>(p + 1);
        bias[col] = radius * std::cos(theta);
        bias[col + 1] = radius * std::sin(theta);
      }
    }
  }
  a.weights = Linear::make(d, heads * levels * points, rng);
  for (auto& w : a.weights.weight.mutable_data()) w *= 0.1;
  a.value = Linear::make(d, d, rng);
  a.output = Linear::make(d, d, rng);
  return a;
}

Tensor DeformableAttention::forward(const Tensor& queries,
                                    const Tensor& ref_points,
                                    const MultiScaleFeatures& features,
                                    DeformableTrace* trace) const {
  const std::size_t n = queries.dim(0);
  const std::size_t d = queries.dim(1);
  if (features.num_levels() != levels) {
    throw DimensionError("deformable attention: expected " +
                         std::to_string(levels) + " feature levels, got " +
                         std::to_string(features.num_levels()));
  }
  if (d % heads != 0) throw DimensionError("deformable attention: D % heads != 0");
  const std::size_t dh = d / heads;
  const std::size_t lp = levels * points;

  const Tensor offs = offsets(queries);
  Tensor attn = reshape(weights(queries), {n * heads, lp});
  attn = reshape(softmax(attn), {n, heads * lp});

  std::vector<Tensor> values;
  std::vector<Tensor> scaled_refs;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t h = features.height(l), w = features.width(l);
    values.push_back(to_map(value(to_tokens(features.levels[l])), h, w));
    const Tensor size = Tensor::from({2}, {static_cast<double>(w), static_cast<double>(h)});
    scaled_refs.push_back(repeat_rows(mul(ref_points, size), points));
  }

  std::vector<Tensor> head_out;
  std::vector<Tensor> locations;
  for (std::size_t hd = 0; hd < heads; ++hd) {
    Tensor acc;
    for (std::size_t l = 0; l < levels; ++l) {
      const std::size_t block = hd * levels + l;
      const Tensor loc = add(
          reshape(slice_cols(offs, block * points * 2, points * 2), {n * points, 2}),
          scaled_refs[l]);
      if (trace) locations.push_back(loc);
      const Tensor head_value = slice_rows(values[l], hd * dh, dh);
      const Tensor sampled = reshape(bilinear_sample(head_value, loc), {n, points, dh});
      const Tensor w = reshape(slice_cols(attn, block * points, points), {n, 1, points});
      const Tensor mixed = reshape(batched_matmul(w, sampled), {n, dh});
      acc = acc.defined() ? add(acc, mixed) : mixed;
    }
    head_out.push_back(acc);
  }
  if (trace) {
    trace->weights = attn;
    trace->locations = concat_rows(locations);
  }
  return output(heads == 1 ? head_out[0] : concat_cols(head_out));
}

void DeformableAttention::visit(const std::string& prefix, const ParameterVisitor& fn) {
  offsets.visit(prefix + ".offsets", fn);
  weights.visit(prefix + ".weights", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

// ---------------------------------------------------------- self attention

SelfAttention SelfAttention::make(std::size_t d, std::size_t heads, Rng& rng) {
  SelfAttention a;
  a.heads = heads;
  a.query = Linear::make(d, d, rng);
  a.key = Linear::make(d, d, rng);
  a.value = Linear::make(d, d, rng);
  a.output = Linear::make(d, d, rng);
  return a;
}

Tensor SelfAttention::forward(const Tensor& x) const {
  const std::size_t d = x.dim(1);
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = query(x), k = key(x), v = value(x);
  std::vector<Tensor> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh = slice_cols(k, h * dh, dh);
    const Tensor vh = slice_cols(v, h * dh, dh);
    const Tensor scores = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    outs.push_back(matmul(scores, vh));
  }
  return output(heads == 1 ? outs[0] : concat_cols(outs));
}

void SelfAttention::visit(const std::string& prefix, const ParameterVisitor& fn) {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

void EncoderLayer::visit(const std::string& prefix, const ParameterVisitor& fn) {
  attn.visit(prefix + ".attn", fn);
  norm1.visit(prefix + ".norm1", fn);
  ffn.visit(prefix + ".ffn", fn);
  norm2.visit(prefix + ".norm2", fn);
}

void DecoderLayer::visit(const std::string& prefix, const ParameterVisitor& fn) {
  self_attn.visit(prefix + ".self_attn", fn);
  norm1.visit(prefix + ".norm1", fn);
  cross_attn.visit(prefix + ".cross_attn", fn);
  norm2.visit(prefix + ".norm2", fn);
  ffn.visit(prefix + ".ffn", fn);
  norm3.visit(prefix + ".norm3", fn);
}

// ------------------------------------------------------------- transformer

Transformer Transformer::make(const ModelConfig& cfg, Rng& rng) {
  Transformer t;
  const auto d = cfg.d_model;
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    EncoderLayer layer;
    layer.attn = DeformableAttention::make(d, cfg.num_heads, cfg.num_levels,
                                           cfg.num_points, rng);
    layer.norm1 = LayerNorm::make(d);
    layer.ffn = FeedForward::make(d, cfg.ffn_dim, rng);
    layer.norm2 = LayerNorm::make(d);
    t.encoder.push_back(std::move(layer));
  }
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    DecoderLayer layer;
    layer.self_attn = SelfAttention::make(d, cfg.num_heads, rng);
    layer.norm1 = LayerNorm::make(d);
    layer.cross_attn = DeformableAttention::make(d, cfg.num_heads, cfg.num_levels,
                                                 cfg.num_points, rng);
    layer.norm2 = LayerNorm::make(d);
    layer.ffn = FeedForward::make(d, cfg.ffn_dim, rng);
    layer.norm3 = LayerNorm::make(d);
    t.decoder.push_back(std::move(layer));
  }
  std::vector<double> q(cfg.num_queries * d);
  for (auto& v : q) v = rng.normal();
  t.query_embed = Tensor::from({cfg.num_queries, d}, std::move(q), true);
  t.reference = Linear::make(d, 2, rng);
  return t;
}

MultiScaleFeatures Transformer::encode(const MultiScaleFeatures& features) const {
  if (encoder.empty()) return features;
  std::vector<std::size_t> sizes;
  std::vector<Tensor> tokens;
  std::vector<double> refs;
  for (std::size_t l = 0; l < features.num_levels(); ++l) {
    const std::size_t h = features.height(l), w = features.width(l);
    sizes.push_back(h * w);
    tokens.push_back(to_tokens(features.levels[l]));
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        refs.push_back((static_cast<double>(x) + 0.5) / static_cast<double>(w));
        refs.push_back((static_cast<double>(y) + 0.5) / static_cast<double>(h));
      }
    }
  }
  const std::size_t total = refs.size() / 2;
  const Tensor ref_points = Tensor::from({total, 2}, std::move(refs));
  Tensor x = concat_rows(tokens);

  auto split = [&](const Tensor& seq) {
    MultiScaleFeatures m;
    std::size_t start = 0;
    for (std::size_t l = 0; l < sizes.size(); ++l) {
      m.levels.push_back(to_map(slice_rows(seq, start, sizes[l]),
                                features.height(l), features.width(l)));
      start += sizes[l];
    }
    return m;
  };

  for (const auto& layer : encoder) {
    const auto maps = split(x);
    x = layer.norm1(add(x, layer.attn.forward(x, ref_points, maps)));
    x = layer.norm2(add(x, layer.ffn(x)));
  }
  return split(x);
}

DecoderOutput Transformer::decode(const MultiScaleFeatures& memory) const {
  DecoderOutput out;
  out.reference_logits = reference(query_embed);
  out.reference_points = sigmoid(out.reference_logits);
  Tensor x = query_embed;
  for (const auto& layer : decoder) {
    x = layer.norm1(add(x, layer.self_attn.forward(x)));
    x = layer.norm2(add(x, layer.cross_attn.forward(x, out.reference_points, memory)));
    x = layer.norm3(add(x, layer.ffn(x)));
  }
  out.embeddings = x;
  return out;
}

DecoderOutput Transformer::forward(const MultiScaleFeatures& features) const {
  return decode(encode(features));
}

void Transformer::visit(const std::string& prefix, const ParameterVisitor& fn) {
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    encoder[i].visit(prefix + ".encoder" + std::to_string(i), fn);
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    decoder[i].visit(prefix + ".decoder" + std::to_string(i), fn);
  }
  fn(prefix + ".query_embed", query_embed);
  reference.visit(prefix + ".reference", fn);
}

// ------------------------------------------------------------------- heads

Heads Heads::make(std::size_t d, std::size_t n_known, Rng& rng) {
  if (n_known < 1) throw ContractError("heads: n_known must be >= 1");
  Heads h;
  h.classifier = Linear::make(d, 1 + n_known, rng);
  // Start from low class and objectness probabilities (focal-loss prior).
  const double prior = -std::log((1.0 - 0.01) / 0.01);
  for (auto& b : h.classifier.bias.mutable_data()) b = prior;
  h.objectness = Linear::make(d, 1, rng);
  h.objectness.bias.mutable_data()[0] = prior;
  h.box1 = Linear::make(d, d, rng);
  h.box2 = Linear::make(d, d, rng);
  h.box3 = Linear::make(d, 4, rng);
  // Initial boxes around a fifth of the image.
  const double size_logit = std::log(0.2 / 0.8);
  h.box3.bias.mutable_data()[2] = size_logit;
  h.box3.bias.mutable_data()[3] = size_logit;
  return h;
}

HeadOutputs Heads::forward(const Tensor& q_e, const Tensor& reference_logits) const {
  HeadOutputs out;
  out.class_logits = classifier(q_e);
  out.objectness_logits = objectness(q_e);
  out.objectness = reshape(sigmoid(out.objectness_logits), {q_e.dim(0)});
  Tensor raw = box3(relu(box2(relu(box1(q_e)))));
  if (reference_logits.defined()) {
    const Tensor pad = Tensor::zeros({q_e.dim(0), 2});
    const Tensor parts[] = {reference_logits, pad};
    raw = add(raw, concat_cols(parts));
  }
  // Squashed into [kBoxMargin, 1 - kBoxMargin]; a bare sigmoid saturates to
  // exactly 0 or 1 in double precision.
  out.boxes = add_scalar(scale(sigmoid(raw), 1.0 - 2.0 * kBoxMargin), kBoxMargin);
  return out;
}

void Heads::grow(std::size_t n_new, Rng& rng) {
  if (n_new == 0) return;
  const std::size_t d = classifier.in_features();
  const std::size_t old_out = classifier.out_features();
  const std::size_t new_out = old_out + n_new;
  auto w_old = classifier.weight.data();
  std::vector<double> w(d * new_out);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < new_out; ++j) {
      w[i * new_out + j] = j < old_out ? w_old[i * old_out + j] : rng.normal(0.0, 0.01);
    }
  }
  std::vector<double> b(classifier.bias.data().begin(), classifier.bias.data().end());
  const double prior = -std::log((1.0 - 0.01) / 0.01);
  b.resize(new_out, prior);
  classifier.weight = Tensor::from({d, new_out}, std::move(w), true);
  classifier.bias = Tensor::from({new_out}, std::move(b), true);
}

void Heads::visit(const std::string& prefix, const ParameterVisitor& fn) {
  classifier.visit(prefix + ".classifier", fn);
  objectness.visit(prefix + ".objectness", fn);
  box1.visit(prefix + ".box1", fn);
  box2.visit(prefix + ".box2", fn);
  box3.visit(prefix + ".box3", fn);
}

// ----------------------------------------------------------------- network

Network::Network(const ModelConfig& cfg, std::size_t n_known) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg.seed);
  backbone_ = Backbone::make(cfg_, rng);
  transformer_ = Transformer::make(cfg_, rng);
  heads_ = Heads::make(cfg_.d_model, n_known, rng);
}

ForwardResult Network::forward(const Tensor& pixels) const {
  ForwardResult r;
  r.backbone = backbone_.forward(pixels);
  r.attention = attention_map(r.backbone.raw);
  r.decoder = transformer_.forward(r.backbone.features);
  r.heads = heads_.forward(r.decoder.embeddings, r.decoder.reference_logits);
  return r;
}

void Network::visit(const ParameterVisitor& fn) {
  backbone_.visit("backbone", fn);
  transformer_.visit("transformer", fn);
  heads_.visit("heads", fn);
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  visit([&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

}  // namespace owdetr::model
