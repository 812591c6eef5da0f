#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "owdetr/data/types.hpp"
#include "owdetr/model/network.hpp"

namespace owdetr::protocol {

struct Detection {
  int label = data::kUnknownLabel;
  double score = 0.0;
  data::BoundingBox box;
  std::size_t query = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct DetectionSet {
  std::int64_t image_id = 0;
  std::vector<Detection> detections;  // score non-increasing

  friend bool operator==(const DetectionSet&, const DetectionSet&) = default;
};

struct InferConfig {
  std::size_t top_k = 50;
  bool novelty = true;          // include the unknown column
  bool score_fusion = false;    // multiply class scores by objectness

  friend bool operator==(const InferConfig&, const InferConfig&) = default;
};

// Indices of the k largest values, ordered by value descending and then by
// index ascending; k is capped at scores.size().
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);

DetectionSet infer(const model::Network& net, const data::LabeledImage& image,
                   const data::ClassIndex& classes, const InferConfig& config = {});

// Parallel over images with up to `workers` threads (0 = hardware threads).
std::vector<DetectionSet> infer_all(const model::Network& net,
                                    std::span<const data::LabeledImage> images,
                                    const data::ClassIndex& classes,
                                    const InferConfig& config = {}, std::size_t workers = 0);

}  // namespace owdetr::protocol
