#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "metric_fixture.hpp"
#include "owdetr/errors.hpp"
#include "owdetr/numerics/random.hpp"

namespace om = owdetr::metrics;
using owdetr::data::BoundingBox;
using owdetr::data::Instance;
using owdetr::protocol::Detection;
using owdetr::protocol::DetectionSet;
using owdetr::testing::MetricFixture;

namespace {

// Boxes on a 1/8 grid so every area is exact in binary floating point.
struct GridBox {
  int x0, y0, x1, y1;
  BoundingBox box() const {
    return {(x0 + x1) / 16.0, (y0 + y1) / 16.0, (x1 - x0) / 8.0, (y1 - y0) / 8.0};
  }
};

GridBox random_grid_box(owdetr::numerics::Rng& rng) {
  const int x0 = int(rng.below(6)), y0 = int(rng.below(6));
  return {x0, y0, x0 + 1 + int(rng.below(8 - x0 - 1)), y0 + 1 + int(rng.below(8 - y0 - 1))};
}

bool overlaps_enough(const GridBox& a, const GridBox& b) {
  const int iw = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const int ih = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const int inter = iw * ih;
  const int uni = (a.x1 - a.x0) * (a.y1 - a.y0) + (b.x1 - b.x0) * (b.y1 - b.y0) - inter;
  return 2 * inter >= uni;
}

double ap_oracle(std::vector<om::ScoredFlag> ranked, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  std::stable_sort(ranked.begin(), ranked.end(), [](auto a, auto b) { return a.score > b.score; });
  double total = 0.0;
  std::size_t tp_seen = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (!ranked[r].tp) continue;
    ++tp_seen;
    double best = 0.0;
    std::size_t tp = tp_seen - 1;
    for (std::size_t s = r; s < ranked.size(); ++s) {
      if (ranked[s].tp) ++tp;
      best = std::max(best, double(tp) / double(s + 1));
    }
    total += best;
  }
  return total / double(n_gt);
}

}  // namespace

TEST(Iou, Examples) {
  const BoundingBox a{0.5, 0.5, 0.4, 0.4};
  EXPECT_NEAR(om::iou(a, a), 1.0, 1e-12);
  EXPECT_EQ(om::iou(a, {0.1, 0.1, 0.1, 0.1}), 0.0);
  EXPECT_DOUBLE_EQ(om::iou(a, {0.7, 0.5, 0.4, 0.4}), 1.0 / 3.0);
  EXPECT_EQ(om::iou({0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}), 0.0);
}

TEST(MatchGreedy, Examples) {
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  const std::vector<Instance> gts{{3, b}};
  std::vector<Detection> one{{3, 0.9, b, 0}};
  EXPECT_EQ(om::match_greedy(one, gts).tp, std::vector<bool>{true});
  std::vector<Detection> two{{3, 0.9, b, 0}, {3, 0.8, b, 1}};
  const auto f = om::match_greedy(two, gts);
  EXPECT_EQ(f.tp, (std::vector<bool>{true, false}));
  EXPECT_EQ(f.gt_matched, std::vector<bool>{true});
  std::vector<Detection> wrong_label{{4, 0.9, b, 0}};
  EXPECT_EQ(om::match_greedy(wrong_label, gts).tp, std::vector<bool>{false});
  std::vector<Detection> unsorted{{3, 0.1, b, 0}, {3, 0.8, b, 1}};
  EXPECT_THROW((void)om::match_greedy(unsorted, gts), owdetr::ContractError);
}

TEST(MatchGreedy, RuleReplayOracle) {
  owdetr::numerics::Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<GridBox> gbox, dbox;
    std::vector<Instance> gts;
    std::vector<Detection> dets;
    const std::size_t n_gt = rng.below(5), n_det = rng.below(7);
    for (std::size_t j = 0; j < n_gt; ++j) {
      gbox.push_back(random_grid_box(rng));
      gts.push_back({int(1 + rng.below(2)), gbox.back().box()});
    }
    double score = 1.0;
    for (std::size_t i = 0; i < n_det; ++i) {
      dbox.push_back(random_grid_box(rng));
      score -= 0.01 * double(rng.below(3));
      dets.push_back({int(1 + rng.below(2)), score, dbox.back().box(), i});
    }
    std::vector<bool> tp(n_det, false), used(n_gt, false);
    for (std::size_t i = 0; i < n_det; ++i) {
      // best unmatched same-label GT by exact rational IoU, lowest index on ties
      long best_num = -1, best_den = 1;
      std::size_t best_j = n_gt;
      for (std::size_t j = 0; j < n_gt; ++j) {
        if (used[j] || gts[j].label != dets[i].label) continue;
        const auto& a = dbox[i];
        const auto& b = gbox[j];
        const long iw = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
        const long ih = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
        const long inter = iw * ih;
        const long uni = long(a.x1 - a.x0) * (a.y1 - a.y0) + long(b.x1 - b.x0) * (b.y1 - b.y0) - inter;
        if (inter * best_den > best_num * uni) {
          best_num = inter;
          best_den = uni;
          best_j = j;
        }
      }
      if (best_j < n_gt && overlaps_enough(dbox[i], gbox[best_j])) {
        tp[i] = true;
        used[best_j] = true;
      }
    }
    const auto flags = om::match_greedy(dets, gts);
    ASSERT_EQ(flags.tp, tp) << "trial " << trial;
    ASSERT_EQ(flags.gt_matched, used) << "trial " << trial;
    EXPECT_LE(std::count(used.begin(), used.end(), true), long(std::min(n_det, n_gt)));
  }
}

TEST(AveragePrecision, Examples) {
  const std::vector<om::ScoredFlag> perfect{{0.9, true}, {0.8, true}, {0.1, false}};
  EXPECT_EQ(om::average_precision(perfect, 2), 1.0);
  const std::vector<om::ScoredFlag> none{{0.9, false}, {0.8, false}};
  EXPECT_EQ(om::average_precision(none, 2), 0.0);
  EXPECT_EQ(om::average_precision({}, 0), 0.0);
  EXPECT_EQ(om::average_precision({}, 3), 0.0);
  // precision/recall steps: (1, 1/2), (1/2, 1/2), (2/3, 1)
  const std::vector<om::ScoredFlag> stepped{{0.9, true}, {0.8, false}, {0.7, true}};
  EXPECT_NEAR(om::average_precision(stepped, 2), 0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-12);
}

TEST(AveragePrecision, MatchesEnvelopeOracle) {
  owdetr::numerics::Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<om::ScoredFlag> ranked(rng.below(20));
    std::size_t tps = 0;
    for (auto& f : ranked) {
      f = {double(rng.below(10)) / 10.0, rng.below(3) == 0};
      tps += f.tp;
    }
    const std::size_t n_gt = tps + rng.below(4);
    const double ap = om::average_precision(ranked, n_gt);
    EXPECT_NEAR(ap, ap_oracle(ranked, n_gt), 1e-12);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(UnknownRecall, Examples) {
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  std::vector<om::GroundTruth> gts{{{0, b}, {1, {0.2, 0.2, 0.1, 0.1}}}};
  std::vector<DetectionSet> none{{1, {{1, 0.9, b, 0}}}};
  EXPECT_EQ(om::unknown_recall(none, gts), 0.0);
  std::vector<DetectionSet> all{{1, {{0, 0.9, b, 0}}}};
  EXPECT_EQ(om::unknown_recall(all, gts), 1.0);
  std::vector<om::GroundTruth> known_only{{{1, b}}};
  EXPECT_FALSE(om::unknown_recall(all, known_only).has_value());
}

TEST(UnknownRecall, FixtureCount) {
  const MetricFixture f;
  EXPECT_EQ(om::unknown_recall(f.dets, f.gts), MetricFixture::kURecall);
}

TEST(UnknownRecall, MonotoneInDetectionCap) {
  const MetricFixture f;
  double last = 0.0;
  for (std::size_t k = 0; k <= 6; ++k) {
    auto capped = f.dets;
    for (auto& d : capped) d.detections.resize(std::min(k, d.detections.size()));
    const double r = *om::unknown_recall(capped, f.gts);
    EXPECT_GE(r, last);
    last = r;
  }
}

TEST(WildernessImpact, Examples) {
  const BoundingBox b{0.5, 0.5, 0.2, 0.2};
  std::vector<om::GroundTruth> gts{{{1, b}}};
  std::vector<DetectionSet> dets{{1, {{1, 0.9, b, 0}, {1, 0.5, {0.1, 0.1, 0.1, 0.1}, 1}}}};
  const auto wi = om::wilderness_impact(dets, gts);
  EXPECT_EQ(wi.value, 0.0);
  EXPECT_EQ(wi.precision_known, wi.precision_with_unknown);
  EXPECT_DOUBLE_EQ(0.8 / 0.64 - 1.0, 0.25);
  const std::vector<om::GroundTruth> empty(1);
  EXPECT_EQ(om::wilderness_impact(dets, empty).value, 0.0);
  EXPECT_FALSE(om::wilderness_impact(dets, empty).reason.empty());
  EXPECT_THROW((void)om::wilderness_impact(dets, gts, 0.0), owdetr::ContractError);
}

TEST(WildernessImpact, FixtureTwoPass) {
  const MetricFixture f;
  const auto wi = om::wilderness_impact(f.dets, f.gts, 0.8);
  EXPECT_EQ(wi.precision_known, MetricFixture::kPrecisionKnown);
  EXPECT_EQ(wi.precision_with_unknown, MetricFixture::kPrecisionWithUnknown);
  EXPECT_EQ(wi.value, MetricFixture::kPrecisionKnown / MetricFixture::kPrecisionWithUnknown - 1.0);
  EXPECT_TRUE(wi.reason.empty());
  const auto half = om::wilderness_impact(f.dets, f.gts, 0.5);
  EXPECT_DOUBLE_EQ(half.value, MetricFixture::kWiAtHalf);
  EXPECT_TRUE(half.reason.empty());
}

TEST(WildernessImpact, RemovingUnknownGtGivesZero) {
  const MetricFixture f;
  EXPECT_EQ(om::wilderness_impact(f.dets, f.known_only()).value, 0.0);
  EXPECT_EQ(om::a_ose(f.dets, f.known_only()), 0u);
}

TEST(Aose, Examples) {
  const BoundingBox u1{0.25, 0.25, 0.2, 0.2}, u2{0.75, 0.75, 0.2, 0.2};
  std::vector<om::GroundTruth> gts{{{0, u1}, {0, u2}}};
  std::vector<DetectionSet> none{{1, {}}};
  EXPECT_EQ(om::a_ose(none, gts), 0u);
  // shifted by a quarter width: IoU (w - s) / (w + s) = 0.6
  const double s = 0.2 / 4.0;
  std::vector<DetectionSet> two{{1, {{1, 0.9, {0.25 + s, 0.25, 0.2, 0.2}, 0}, {2, 0.8, {0.75 - s, 0.75, 0.2, 0.2}, 1}}}};
  EXPECT_NEAR(om::iou(two[0].detections[0].box, u1), 0.6, 1e-12);
  EXPECT_EQ(om::a_ose(two, gts), 2u);
}

TEST(Aose, FixtureCountsInstancesOrDetections) {
  const MetricFixture f;
  EXPECT_EQ(om::a_ose(f.dets, f.gts), MetricFixture::kAoseInstances);
  EXPECT_EQ(om::a_ose(f.dets, f.gts, om::AoseCounting::kDetections), MetricFixture::kAoseDetections);
}

TEST(Evaluate, GoldenFixture) {
  const MetricFixture f;
  const auto r = om::evaluate(f.dets, f.gts, f.previous, f.current, 2);
  EXPECT_NEAR(r.ap.at(1), MetricFixture::kApClass1, 1e-9);
  EXPECT_NEAR(r.ap.at(2), MetricFixture::kApClass2, 1e-9);
  EXPECT_NEAR(*r.map_previous, MetricFixture::kApClass1, 1e-9);
  EXPECT_NEAR(*r.map_current, MetricFixture::kApClass2, 1e-9);
  EXPECT_NEAR(*r.map_both, MetricFixture::kMapBoth, 1e-9);
  EXPECT_EQ(*r.u_recall, MetricFixture::kURecall);
  EXPECT_EQ(*r.wi, MetricFixture::kPrecisionKnown / MetricFixture::kPrecisionWithUnknown - 1.0);
  EXPECT_EQ(*r.a_ose, MetricFixture::kAoseInstances);
  EXPECT_EQ(r.images, 3u);
  EXPECT_EQ(r.gt_per_class, (std::map<int, std::size_t>{{0, 5}, {1, 2}, {2, 2}}));
}

TEST(Evaluate, ShapeRules) {
  const MetricFixture f;
  std::vector<DetectionSet> empty(3);
  const auto r = om::evaluate(empty, f.gts, f.previous, f.current, 2);
  EXPECT_EQ(r.ap.at(1), 0.0);
  EXPECT_EQ(r.ap.at(2), 0.0);
  EXPECT_EQ(*r.a_ose, 0u);
  EXPECT_EQ(*r.u_recall, 0.0);
  const auto first = om::evaluate(f.dets, f.gts, {}, {1, 2}, 1);
  EXPECT_FALSE(first.map_previous.has_value());
  const auto closed = om::evaluate(f.dets, f.known_only(), f.previous, f.current, 4);
  EXPECT_FALSE(closed.u_recall.has_value());
  EXPECT_FALSE(closed.wi.has_value());
  EXPECT_FALSE(closed.a_ose.has_value());
}

TEST(Report, JsonRoundTripAndText) {
  const MetricFixture f;
  const auto r = om::evaluate(f.dets, f.gts, f.previous, f.current, 2);
  EXPECT_EQ(om::report_from_json(om::report_to_json(r)), r);
  const auto closed = om::evaluate(f.dets, f.known_only(), f.previous, f.current, 4);
  EXPECT_EQ(om::report_from_json(om::report_to_json(closed)), closed);
  const auto text = om::report_to_text(r);
  EXPECT_NE(text.find("U-Recall"), std::string::npos);
  EXPECT_THROW((void)om::report_from_json("{"), owdetr::ParseError);
}

TEST(Report, DetectionDumpRoundTrip) {
  const MetricFixture f;
  std::stringstream ss;
  om::write_detections(f.dets, ss);
  EXPECT_EQ(om::read_detections(ss), f.dets);
  std::stringstream bad("{\"image_id\": 1, \"label\": 0, \"score\": 0.5, \"box\": [0.5, 0.5, 0.1, 0.1]}\nnot json\n");
  try {
    (void)om::read_detections(bad);
    FAIL() << "expected ParseError";
  } catch (const owdetr::ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(WildernessImpact, UnreachedRecallReadsAtLastTruePositive) {
  const MetricFixture f;
  auto dets = f.dets;
  dets[2].detections.pop_back();  // last TP at 0.6: tp 3, fp 3, wild 2
  const auto wi = om::wilderness_impact(dets, f.gts, 0.8);
  EXPECT_EQ(wi.precision_known, 3.0 / 6.0);
  EXPECT_EQ(wi.precision_with_unknown, 3.0 / 8.0);
  EXPECT_NE(wi.reason.find("never reaches"), std::string::npos);
}
