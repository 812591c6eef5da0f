#include "owdetr/matching/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "owdetr/errors.hpp"

namespace owdetr::matching {

double giou(const BoundingBox& a, const BoundingBox& b) {
  if (!(a.w > 0.0 && a.h > 0.0 && b.w > 0.0 && b.h > 0.0)) {
    throw ContractError("giou: boxes must have positive area");
  }
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  const double ew = std::max(a.x1(), b.x1()) - std::min(a.x0(), b.x0());
  const double eh = std::max(a.y1(), b.y1()) - std::min(a.y0(), b.y0());
  const double enclosing = ew * eh;
  return inter / uni - (enclosing - uni) / enclosing;
}

std::vector<std::size_t> MatchResult::query_of_gt(std::size_t num_gt) const {
  std::vector<std::size_t> out(num_gt, std::numeric_limits<std::size_t>::max());
  for (const auto& [q, g] : pairs) out.at(g) = q;
  return out;
}

bool MatchResult::is_matched(std::size_t query) const {
  return std::any_of(pairs.begin(), pairs.end(),
                     [query](const auto& p) { return p.first == query; });
}

CostMatrix build_cost_matrix(const model::HeadOutputs& outputs,
                             std::span<const Instance> gts,
                             const data::ClassIndex& classes,
                             const CostWeights& weights) {
  const std::size_t m = outputs.num_queries();
  const std::size_t width = outputs.class_logits.dim(1);
  std::vector<std::size_t> columns;
  columns.reserve(gts.size());
  for (const auto& gt : gts) {
    if (gt.label == data::kUnknownLabel || !classes.contains(gt.label)) {
      throw ContractError("build_cost_matrix: gt label " + std::to_string(gt.label) +
                          " is not a known class");
    }
    const std::size_t col = classes.column(gt.label);
    if (col >= width) {
      throw ContractError("build_cost_matrix: classifier has no column for label " +
                          std::to_string(gt.label));
    }
    columns.push_back(col);
  }

  CostMatrix cost(m, gts.size());
  const auto logits = outputs.class_logits.data();
  const auto boxes = outputs.boxes.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* p = boxes.data() + 4 * i;
    BoundingBox pred{p[0], p[1], std::max(p[2], kMinBoxSize), std::max(p[3], kMinBoxSize)};
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const BoundingBox& g = gts[j].box;
      const double prob = 1.0 / (1.0 + std::exp(-logits[i * width + columns[j]]));
      const double l1 = std::abs(p[0] - g.cx) + std::abs(p[1] - g.cy) +
                        std::abs(p[2] - g.w) + std::abs(p[3] - g.h);
      cost.at(i, j) = -weights.cls * prob + weights.l1 * l1 +
                      weights.giou * (1.0 - giou(pred, g));
    }
  }
  return cost;
}

MatchResult hungarian_assign(const CostMatrix& cost) {
  const std::size_t m = cost.rows;  // queries
  const std::size_t n = cost.cols;  // gts
  if (n > m) {
    throw CapacityError("hungarian_assign: " + std::to_string(n) +
                        " ground-truth instances exceed " + std::to_string(m) +
                        " queries");
  }
  for (double v : cost.values) {
    if (!std::isfinite(v)) throw ContractError("hungarian_assign: non-finite cost");
  }

  // Shortest augmenting paths with potentials; gts are rows, queries columns,
  // both 1-based with index 0 as the virtual start.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  MatchResult result;
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0) {
      result.pairs.emplace_back(j - 1, owner[j] - 1);
    } else {
      result.unmatched_queries.push_back(j - 1);
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  return result;
}

double assignment_cost(const CostMatrix& cost, const MatchResult& match) {
  double total = 0.0;
  for (const auto& [q, g] : match.pairs) total += cost.at(q, g);
  return total;
}

}  // namespace owdetr::matching
