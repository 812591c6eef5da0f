#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "owdetr/data/types.hpp"
#include "owdetr/model/network.hpp"

namespace owdetr::matching {

using data::BoundingBox;
using data::Instance;

struct CostWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;

  friend bool operator==(const CostWeights&, const CostWeights&) = default;
};

// Boxes narrower than this are widened before GIoU.
inline constexpr double kMinBoxSize = 1e-6;

// Throws ContractError on a zero-area box.
double giou(const BoundingBox& a, const BoundingBox& b);

// Row-major cost table; rows are queries, columns ground-truth instances.
// Either dimension may be zero.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  CostMatrix() = default;
  CostMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query, gt), sorted by gt
  std::vector<std::size_t> unmatched_queries;              // ascending

  // Query matched to each gt index, or SIZE_MAX.
  std::vector<std::size_t> query_of_gt(std::size_t num_gt) const;
  bool is_matched(std::size_t query) const;
};

CostMatrix build_cost_matrix(const model::HeadOutputs& outputs,
                             std::span<const Instance> gts,
                             const data::ClassIndex& classes,
                             const CostWeights& weights = {});

// Minimum-total-cost injective assignment of columns (gts) to rows (queries).
// Throws CapacityError when cols > rows and ContractError on non-finite cost.
MatchResult hungarian_assign(const CostMatrix& cost);

double assignment_cost(const CostMatrix& cost, const MatchResult& match);

}  // namespace owdetr::matching
