#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "owdetr/errors.hpp"
#include "owdetr/matching/matching.hpp"
#include "owdetr/numerics/random.hpp"

namespace nm = owdetr::numerics;
namespace om = owdetr::matching;
using owdetr::data::BoundingBox;
using owdetr::data::ClassIndex;
using owdetr::data::Instance;

namespace {

double giou_oracle(const BoundingBox& a, const BoundingBox& b) {
  const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2, ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
  const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2, by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
  const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
  const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double enc = (std::max(ax1, bx1) - std::min(ax0, bx0)) * (std::max(ay1, by1) - std::min(ay0, by0));
  return inter / uni - (enc - uni) / enc;
}

BoundingBox random_box(nm::Rng& rng) {
  return {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4), rng.uniform(0.05, 0.4)};
}

om::CostMatrix random_cost(std::size_t m, std::size_t k, nm::Rng& rng) {
  om::CostMatrix c(m, k);
  for (auto& v : c.values) v = rng.uniform(-5.0, 5.0);
  return c;
}

// Minimum over all injections of columns into rows, by enumerating ordered
// row choices.
double brute_force_min(const om::CostMatrix& c) {
  std::vector<std::size_t> rows(c.rows);
  std::iota(rows.begin(), rows.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0;
    for (std::size_t j = 0; j < c.cols; ++j) total += c.at(rows[j], j);
    best = std::min(best, total);
  } while (std::next_permutation(rows.begin(), rows.end()));
  return best;
}

void expect_partition(const om::MatchResult& r, std::size_t m, std::size_t k) {
  std::vector<int> seen(m, 0);
  std::vector<int> gt_seen(k, 0);
  for (auto [q, g] : r.pairs) {
    ASSERT_LT(q, m);
    ASSERT_LT(g, k);
    ++seen[q];
    ++gt_seen[g];
  }
  for (std::size_t q : r.unmatched_queries) ++seen[q];
  for (int s : seen) EXPECT_EQ(s, 1);
  for (int s : gt_seen) EXPECT_EQ(s, 1);
  EXPECT_TRUE(std::is_sorted(r.unmatched_queries.begin(), r.unmatched_queries.end()));
}

owdetr::model::HeadOutputs outputs(std::size_t m, std::size_t n_known, nm::Rng& rng) {
  owdetr::model::HeadOutputs out;
  std::vector<double> logits(m * (n_known + 1)), boxes;
  for (auto& v : logits) v = rng.uniform(-3, 3);
  for (std::size_t i = 0; i < m; ++i) {
    const auto b = random_box(rng);
    boxes.insert(boxes.end(), {b.cx, b.cy, b.w, b.h});
  }
  out.class_logits = nm::Tensor::from({m, n_known + 1}, logits);
  out.objectness_logits = nm::Tensor::zeros({m, 1});
  out.objectness = nm::Tensor::full({m}, 0.5);
  out.boxes = nm::Tensor::from({m, 4}, boxes);
  return out;
}

}  // namespace

TEST(Giou, IdenticalBoxesGiveOne) {
  const BoundingBox b{0.4, 0.6, 0.2, 0.3};
  EXPECT_DOUBLE_EQ(om::giou(b, b), 1.0);
}

TEST(Giou, DisjointBoxesMatchOracle) {
  const BoundingBox a{0.25, 0.25, 0.1, 0.1}, b{0.75, 0.75, 0.1, 0.1};
  EXPECT_NEAR(om::giou(a, b), giou_oracle(a, b), 1e-12);
  // 0.02 / 0.36 of the 0.6 x 0.6 hull is covered.
  EXPECT_NEAR(om::giou(a, b), 0.02 / 0.36 - 1.0, 1e-12);
}

TEST(Giou, NestedHalfSizeMatchesOracle) {
  const BoundingBox a{0.5, 0.5, 0.4, 0.4}, b{0.5, 0.5, 0.2, 0.2};
  EXPECT_NEAR(om::giou(a, b), giou_oracle(a, b), 1e-12);
  EXPECT_NEAR(om::giou(a, b), 0.25, 1e-12);
}

TEST(Giou, RandomPairsMatchOracleAndRange) {
  nm::Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_box(rng), b = random_box(rng);
    const double g = om::giou(a, b);
    EXPECT_NEAR(g, giou_oracle(a, b), 1e-12);
    EXPECT_GT(g, -1.0);
    EXPECT_LE(g, 1.0);
    EXPECT_NEAR(g, om::giou(b, a), 1e-15);
  }
}

TEST(Giou, ZeroAreaIsContractError) {
  EXPECT_THROW((void)om::giou({0.5, 0.5, 0.0, 0.1}, {0.5, 0.5, 0.1, 0.1}), owdetr::ContractError);
}

TEST(CostMatrix, PerfectMatchCostsMinusClassWeight) {
  nm::Rng rng(2);
  auto out = outputs(3, 2, rng);
  const BoundingBox gt{0.4, 0.5, 0.2, 0.3};
  auto boxes = out.boxes.mutable_data();
  boxes[4] = gt.cx;
  boxes[5] = gt.cy;
  boxes[6] = gt.w;
  boxes[7] = gt.h;
  out.class_logits.mutable_data()[1 * 3 + 2] = 800.0;  // sigmoid saturates to 1
  const std::vector<Instance> gts{{7, gt}};
  const auto c = om::build_cost_matrix(out, gts, ClassIndex({4, 7}));
  ASSERT_EQ(c.rows, 3u);
  ASSERT_EQ(c.cols, 1u);
  EXPECT_DOUBLE_EQ(c.at(1, 0), -2.0);
  EXPECT_LE(c.at(1, 0), std::min(c.at(0, 0), c.at(2, 0)));
}

TEST(CostMatrix, NoGroundTruthLeavesAllUnmatched) {
  nm::Rng rng(3);
  const auto c = om::build_cost_matrix(outputs(4, 1, rng), {}, ClassIndex({1}));
  EXPECT_EQ(c.rows, 4u);
  EXPECT_EQ(c.cols, 0u);
  const auto r = om::hungarian_assign(c);
  EXPECT_TRUE(r.pairs.empty());
  EXPECT_EQ(r.unmatched_queries, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(CostMatrix, MatchesPerEntryOracle) {
  nm::Rng rng(4);
  const ClassIndex classes({3, 1, 6});
  const auto out = outputs(7, 3, rng);
  std::vector<Instance> gts;
  for (int k = 0; k < 4; ++k) gts.push_back({classes.labels()[rng.below(3)], random_box(rng)});
  const om::CostWeights w{1.5, 4.0, 3.0};
  const auto c = om::build_cost_matrix(out, gts, classes, w);
  for (std::size_t i = 0; i < 7; ++i) {
    const BoundingBox p{out.boxes[i * 4], out.boxes[i * 4 + 1], out.boxes[i * 4 + 2], out.boxes[i * 4 + 3]};
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const auto& g = gts[j].box;
      const double logit = out.class_logits[i * 4 + classes.column(gts[j].label)];
      const double prob = 1.0 / (1.0 + std::exp(-logit));
      const double l1 = std::abs(p.cx - g.cx) + std::abs(p.cy - g.cy) + std::abs(p.w - g.w) +
                        std::abs(p.h - g.h);
      const double want = -w.cls * prob + w.l1 * l1 + w.giou * (1.0 - giou_oracle(p, g));
      EXPECT_NEAR(c.at(i, j), want, 1e-12);
    }
  }
}

TEST(CostMatrix, UnknownLabelIsContractError) {
  nm::Rng rng(5);
  const std::vector<Instance> gts{{0, {0.5, 0.5, 0.2, 0.2}}};
  EXPECT_THROW((void)om::build_cost_matrix(outputs(3, 1, rng), gts, ClassIndex({1})),
               owdetr::ContractError);
}

TEST(CostMatrix, DegeneratePredictionIsClamped) {
  nm::Rng rng(6);
  auto out = outputs(2, 1, rng);
  out.boxes.mutable_data()[2] = 0.0;
  const std::vector<Instance> gts{{1, {0.5, 0.5, 0.2, 0.2}}};
  const auto c = om::build_cost_matrix(out, gts, ClassIndex({1}));
  EXPECT_TRUE(std::isfinite(c.at(0, 0)));
}

TEST(Hungarian, DiagonalZeroGivesIdentity) {
  om::CostMatrix c(4, 4, 1.0);
  for (std::size_t i = 0; i < 4; ++i) c.at(i, i) = 0.0;
  const auto r = om::hungarian_assign(c);
  ASSERT_EQ(r.pairs.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(r.pairs[i], std::make_pair(i, i));
  EXPECT_TRUE(r.unmatched_queries.empty());
}

TEST(Hungarian, OneByOne) {
  const auto r = om::hungarian_assign(om::CostMatrix(1, 1, 3.0));
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], std::make_pair(std::size_t{0}, std::size_t{0}));
}

TEST(Hungarian, MatchesBruteForceOnRandomSixByFive) {
  nm::Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto c = random_cost(6, 5, rng);
    const auto r = om::hungarian_assign(c);
    expect_partition(r, 6, 5);
    EXPECT_NEAR(om::assignment_cost(c, r), brute_force_min(c), 1e-9);
  }
}

TEST(Hungarian, OptimalForAllSmallShapes) {
  nm::Rng rng(8);
  for (std::size_t m = 1; m <= 7; ++m) {
    for (std::size_t k = 0; k <= m; ++k) {
      for (int trial = 0; trial < 5; ++trial) {
        const auto c = random_cost(m, k, rng);
        const auto r = om::hungarian_assign(c);
        expect_partition(r, m, k);
        if (k > 0) EXPECT_NEAR(om::assignment_cost(c, r), brute_force_min(c), 1e-9);
      }
    }
  }
}

TEST(Hungarian, UniformShiftKeepsPairs) {
  nm::Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_cost(7, 4, rng);
    const auto before = om::hungarian_assign(c);
    for (auto& v : c.values) v += 12.5;
    EXPECT_EQ(om::hungarian_assign(c).pairs, before.pairs);
  }
}

TEST(Hungarian, TiesGoToLowestQuery) {
  const auto one = om::hungarian_assign(om::CostMatrix(5, 1, 0.0));
  EXPECT_EQ(one.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
  const auto many = om::hungarian_assign(om::CostMatrix(6, 3, 1.0));
  std::vector<std::size_t> queries;
  for (auto [q, g] : many.pairs) queries.push_back(q);
  std::sort(queries.begin(), queries.end());
  EXPECT_EQ(queries, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Hungarian, MoreGroundTruthThanQueriesIsCapacityError) {
  EXPECT_THROW((void)om::hungarian_assign(om::CostMatrix(2, 3)), owdetr::CapacityError);
}

TEST(Hungarian, NonFiniteCostIsContractError) {
  om::CostMatrix c(2, 2);
  c.at(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW((void)om::hungarian_assign(c), owdetr::ContractError);
}

TEST(MatchResult, QueryLookup) {
  om::CostMatrix c(3, 2, 1.0);
  c.at(2, 0) = 0.0;
  c.at(0, 1) = 0.0;
  const auto r = om::hungarian_assign(c);
  EXPECT_EQ(r.query_of_gt(2), (std::vector<std::size_t>{2, 0}));
  EXPECT_TRUE(r.is_matched(0));
  EXPECT_FALSE(r.is_matched(1));
  EXPECT_EQ(r.unmatched_queries, (std::vector<std::size_t>{1}));
}
