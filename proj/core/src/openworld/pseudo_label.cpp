#include "owdetr/openworld/pseudo_label.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "owdetr/errors.hpp"

namespace owdetr::openworld {
namespace {

struct Span1d {
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive
};

// Clipped continuous window [lo, hi] on an axis of n cells.
std::pair<double, double> clip_axis(double lo, double hi, std::size_t n) {
  const double size = static_cast<double>(n);
  return {std::clamp(lo, 0.0, size), std::clamp(hi, 0.0, size)};
}

Span1d center_cells(double lo, double hi, std::size_t n) {
  // Cell c has its center at c + 0.5.
  const double first = std::ceil(lo - 0.5);
  const double last = std::floor(hi - 0.5);
  if (first <= last && last >= 0.0 && first <= static_cast<double>(n) - 1.0) {
    return {static_cast<std::size_t>(std::max(first, 0.0)),
            static_cast<std::size_t>(std::min(last, static_cast<double>(n) - 1.0))};
  }
  const double mid = 0.5 * (lo + hi);
  const auto cell = std::min(static_cast<std::size_t>(mid), n - 1);
  return {cell, cell};
}

double overlap(double lo, double hi, std::size_t cell) {
  const double c = static_cast<double>(cell);
  return std::max(0.0, std::min(hi, c + 1.0) - std::max(lo, c));
}

}  // namespace

double objectness_score(const Tensor& attention, const BoundingBox& box, WindowRule rule) {
  if (attention.rank() != 2) {
    throw DimensionError("objectness_score: attention map must be [h x w], got " +
                         numerics::shape_str(attention.shape()));
  }
  const std::size_t gh = attention.dim(0);
  const std::size_t gw = attention.dim(1);
  const auto [x0, x1] = clip_axis(box.x0() * gw, box.x1() * gw, gw);
  const auto [y0, y1] = clip_axis(box.y0() * gh, box.y1() * gh, gh);
  if (!(x1 > x0) || !(y1 > y0)) {
    throw ScoreError("objectness_score: box does not overlap the attention grid");
  }
  const auto a = attention.data();

  if (rule == WindowRule::kCellCenter) {
    const Span1d cols = center_cells(x0, x1, gw);
    const Span1d rows = center_cells(y0, y1, gh);
    double total = 0.0;
    for (std::size_t r = rows.first; r <= rows.last; ++r) {
      for (std::size_t c = cols.first; c <= cols.last; ++c) total += a[r * gw + c];
    }
    const double count = static_cast<double>((rows.last - rows.first + 1) *
                                             (cols.last - cols.first + 1));
    return total / count;
  }

  const auto c_first = static_cast<std::size_t>(std::floor(x0));
  const auto c_last = std::min(static_cast<std::size_t>(std::ceil(x1)), gw) - 1;
  const auto r_first = static_cast<std::size_t>(std::floor(y0));
  const auto r_last = std::min(static_cast<std::size_t>(std::ceil(y1)), gh) - 1;
  double total = 0.0;
  double weight = 0.0;
  for (std::size_t r = r_first; r <= r_last; ++r) {
    const double wy = overlap(y0, y1, r);
    for (std::size_t c = c_first; c <= c_last; ++c) {
      const double wxy = wy * overlap(x0, x1, c);
      total += wxy * a[r * gw + c];
      weight += wxy;
    }
  }
  return total / weight;
}

bool PseudoLabelSet::contains(std::size_t query) const {
  return std::find(queries.begin(), queries.end(), query) != queries.end();
}

PseudoLabelSet select_pseudo_unknowns(const model::HeadOutputs& outputs,
                                      const MatchResult& match,
                                      const Tensor& attention, std::size_t k_u,
                                      WindowRule rule) {
  const auto boxes = outputs.boxes.data();
  struct Candidate {
    std::size_t query;
    BoundingBox box;
    double score;
  };
  std::vector<Candidate> candidates;
  for (std::size_t q : match.unmatched_queries) {
    const double* p = boxes.data() + 4 * q;
    const BoundingBox box{p[0], p[1], p[2], p[3]};
    try {
      candidates.push_back({q, box, objectness_score(attention, box, rule)});
    } catch (const ScoreError&) {
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.query < b.query;
                   });
  PseudoLabelSet out;
  const std::size_t n = std::min(k_u, candidates.size());
  for (std::size_t i = 0; i < n; ++i) {
    out.queries.push_back(candidates[i].query);
    out.boxes.push_back(candidates[i].box);
    out.scores.push_back(candidates[i].score);
  }
  return out;
}

TrainingTargets build_training_targets(const MatchResult& match,
                                       std::span<const Instance> gts,
                                       const PseudoLabelSet& pseudo,
                                       std::size_t num_queries) {
  TrainingTargets t;
  t.class_label.assign(num_queries, kBackground);
  t.objectness.assign(num_queries, 0);
  t.box.assign(num_queries, std::nullopt);
  for (const auto& [q, g] : match.pairs) {
    if (q >= num_queries || g >= gts.size()) {
      throw ContractError("build_training_targets: match index out of range");
    }
    t.class_label[q] = gts[g].label;
    t.objectness[q] = 1;
    t.box[q] = gts[g].box;
  }
  for (std::size_t q : pseudo.queries) {
    if (q >= num_queries) {
      throw ContractError("build_training_targets: pseudo-label index out of range");
    }
    if (t.objectness[q] != 0) {
      throw ContractError("build_training_targets: query " + std::to_string(q) +
                          " is both matched and pseudo-labeled");
    }
    t.class_label[q] = data::kUnknownLabel;
    t.objectness[q] = 1;
  }
  return t;
}

std::vector<int> class_columns(const TrainingTargets& targets,
                               const data::ClassIndex& classes, bool novelty) {
  std::vector<int> out(targets.size(), kBackground);
  for (std::size_t q = 0; q < targets.size(); ++q) {
    const int label = targets.class_label[q];
    if (label == kBackground) continue;
    if (label == data::kUnknownLabel) {
      if (novelty) out[q] = 0;
      continue;
    }
    out[q] = static_cast<int>(classes.column(label));
  }
  return out;
}

std::vector<int> objectness_columns(const TrainingTargets& targets) {
  std::vector<int> out(targets.size(), kBackground);
  for (std::size_t q = 0; q < targets.size(); ++q) {
    if (targets.objectness[q] != 0) out[q] = 0;
  }
  return out;
}

}  // namespace owdetr::openworld
