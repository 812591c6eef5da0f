#pragma once

#include <vector>

#include "owdetr/metrics/metrics.hpp"

namespace owdetr::testing {

// Three images, previous {1}, current {2}, five unknown GT. Expected values
// below were stepped out by hand.
struct MetricFixture {
  std::vector<protocol::DetectionSet> dets;
  std::vector<metrics::GroundTruth> gts;
  std::vector<int> previous{1};
  std::vector<int> current{2};

  static constexpr double kApClass1 = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
  static constexpr double kApClass2 = 0.5 * 0.4 + 0.5 * 0.4;
  static constexpr double kMapBoth = (kApClass1 + kApClass2) / 2.0;
  static constexpr double kURecall = 3.0 / 5.0;
  // recall 0.8 is first reached at the last rank (4/4): tp 4, fp 3, wild 3
  static constexpr double kPrecisionKnown = 4.0 / 7.0;
  static constexpr double kPrecisionWithUnknown = 4.0 / 10.0;
  // recall 0.5 is first reached at rank 4: tp 2, fp 1, wild 1
  static constexpr double kWiAtHalf = (2.0 / 3.0) / (2.0 / 4.0) - 1.0;
  static constexpr unsigned kAoseInstances = 2;
  static constexpr unsigned kAoseDetections = 3;

  static data::BoundingBox box(double cx, double cy, double w, double h) { return {cx, cy, w, h}; }

  MetricFixture() {
    const auto a1 = box(0.25, 0.25, 0.2, 0.2), a2 = box(0.75, 0.25, 0.2, 0.2);
    const auto u1 = box(0.25, 0.75, 0.2, 0.2);
    const auto b1 = box(0.3, 0.3, 0.2, 0.2), u2 = box(0.7, 0.7, 0.2, 0.2);
    const auto u3 = box(0.3, 0.7, 0.2, 0.2);
    const auto c2 = box(0.5, 0.5, 0.4, 0.4), u4 = box(0.15, 0.15, 0.1, 0.1);
    const auto u5 = box(0.85, 0.85, 0.1, 0.1);

    gts = {{{1, a1}, {2, a2}, {0, u1}},
           {{1, b1}, {0, u2}, {0, u3}},
           {{2, c2}, {0, u4}, {0, u5}}};
    dets = {{1, {{1, 0.95, a1, 0}, {2, 0.9, u1, 1}, {0, 0.85, u1, 2}, {2, 0.6, a2, 3}}},
            {2,
             {{1, 0.8, b1, 0},
              {1, 0.7, b1, 1},
              {1, 0.65, u2, 2},
              {2, 0.55, u2, 3},
              {0, 0.5, u3, 4},
              {0, 0.4, u2, 5}}},
            {3,
             {{1, 0.88, box(0.2, 0.15, 0.1, 0.1), 0},
              {2, 0.75, box(0.7, 0.5, 0.4, 0.4), 1},
              {0, 0.45, box(0.85, 0.15, 0.1, 0.1), 2},
              {2, 0.3, c2, 3}}}};
  }

  std::vector<metrics::GroundTruth> known_only() const {
    auto out = gts;
    for (auto& image : out) std::erase_if(image, [](const data::Instance& g) { return g.label == 0; });
    return out;
  }
};

}  // namespace owdetr::testing
