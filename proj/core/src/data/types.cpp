#include "owdetr/data/types.hpp"

#include <algorithm>
#include <array>

#include "owdetr/errors.hpp"

namespace owdetr::data {

BoundingBox BoundingBox::clipped() const {
  const double lx = std::clamp(x0(), 0.0, 1.0);
  const double ly = std::clamp(y0(), 0.0, 1.0);
  const double hx = std::clamp(x1(), 0.0, 1.0);
  const double hy = std::clamp(y1(), 0.0, 1.0);
  return {0.5 * (lx + hx), 0.5 * (ly + hy), hx - lx, hy - ly};
}

bool BoundingBox::valid() const {
  if (!(cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0)) return false;
  if (!(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0)) return false;
  return clipped().area() > 0.0;
}

BoundingBox to_normalized(const AnnotationRecord& a, int width, int height) {
  const double W = width, H = height;
  return {(a.x + 0.5 * a.w) / W, (a.y + 0.5 * a.h) / H, a.w / W, a.h / H};
}

std::string_view class_name(int label) {
  static constexpr std::array<std::string_view, kNumShapeClasses + 1> kNames = {
      "unknown", "circle", "square", "triangle", "cross",
      "ring",    "star",   "bar",    "diamond"};
  if (label < 0 || label > kNumShapeClasses) return "invalid";
  return kNames[static_cast<std::size_t>(label)];
}

}  // namespace owdetr::data

namespace owdetr::data {

ClassIndex::ClassIndex(std::vector<int> known) : labels_(std::move(known)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] <= 0) {
      throw ContractError("ClassIndex: known labels must be positive, got " +
                          std::to_string(labels_[i]));
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (labels_[j] == labels_[i]) {
        throw ContractError("ClassIndex: duplicate label " + std::to_string(labels_[i]));
      }
    }
  }
}

bool ClassIndex::contains(int label) const {
  return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
}

std::size_t ClassIndex::column(int label) const {
  const auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) {
    throw ContractError("label " + std::to_string(label) + " is not a known class");
  }
  return 1 + static_cast<std::size_t>(it - labels_.begin());
}

int ClassIndex::label(std::size_t column) const {
  if (column == 0) return kUnknownLabel;
  if (column > labels_.size()) {
    throw ContractError("classifier column " + std::to_string(column) + " out of range");
  }
  return labels_[column - 1];
}

}  // namespace owdetr::data
