#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "owdetr/numerics/tensor.hpp"

namespace owdetr::data {

// Label 0 is reserved for "unknown"; known classes are 1..C.
inline constexpr int kUnknownLabel = 0;

// Normalized center-format box, all fields relative to the image size.
struct BoundingBox {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  // Intersection with the unit square; zero-size result when disjoint.
  BoundingBox clipped() const;
  bool valid() const;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Instance {
  int label = kUnknownLabel;
  BoundingBox box;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct LabeledImage {
  numerics::Tensor pixels;  // [3 x H x W] in [0, 1]
  std::vector<Instance> instances;
  std::int64_t image_id = 0;

  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
};

struct ImageRecord {
  std::int64_t image_id = 0;
  std::string file;  // relative to the manifest's directory
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// Absolute-pixel, top-left [x, y, w, h] box.
struct AnnotationRecord {
  std::int64_t image_id = 0;
  int label = kUnknownLabel;
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct DatasetManifest {
  std::vector<ImageRecord> images;
  std::vector<AnnotationRecord> annotations;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

BoundingBox to_normalized(const AnnotationRecord& a, int width, int height);

// Shape taxonomy of the synthetic benchmark; ids double as class labels.
enum class ShapeClass : int {
  kCircle = 1,
  kSquare,
  kTriangle,
  kCross,
  kRing,
  kStar,
  kBar,
  kDiamond,
};

inline constexpr int kNumShapeClasses = 8;

std::string_view class_name(int label);

// Known class ids in the order they were introduced, mapped to classifier
// columns 1..n (column 0 is the unknown class).
class ClassIndex {
 public:
  ClassIndex() = default;
  explicit ClassIndex(std::vector<int> known);

  std::size_t size() const { return labels_.size(); }
  bool contains(int label) const;
  // Throws ContractError for labels that are not known.
  std::size_t column(int label) const;
  // Column 0 maps to kUnknownLabel.
  int label(std::size_t column) const;
  const std::vector<int>& labels() const { return labels_; }

 private:
  std::vector<int> labels_;
};

}  // namespace owdetr::data
