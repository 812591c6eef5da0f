#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "owdetr/data/types.hpp"
#include "owdetr/matching/matching.hpp"
#include "owdetr/model/network.hpp"

namespace owdetr::openworld {

using data::BoundingBox;
using data::Instance;
using matching::MatchResult;
using numerics::Tensor;

// How a box window is discretized on the attention grid.
enum class WindowRule {
  kCellCenter,      // mean over cells whose centers fall inside the window
  kFractionalArea,  // overlap-area weighted mean over touched cells
};

// Mean of A [h x w] inside the box (normalized image coordinates). An axis
// whose window holds no cell center falls back to the cell containing the
// window's midpoint. Throws ScoreError when the box misses the grid.
double objectness_score(const Tensor& attention, const BoundingBox& box,
                        WindowRule rule = WindowRule::kCellCenter);

struct PseudoLabelSet {
  std::vector<std::size_t> queries;  // ranked by score, ties to lower index
  std::vector<BoundingBox> boxes;
  std::vector<double> scores;

  std::size_t size() const { return queries.size(); }
  bool contains(std::size_t query) const;
};

// Top-k_u unmatched queries by objectness score of their predicted boxes.
PseudoLabelSet select_pseudo_unknowns(const model::HeadOutputs& outputs,
                                      const MatchResult& match,
                                      const Tensor& attention, std::size_t k_u,
                                      WindowRule rule = WindowRule::kCellCenter);

inline constexpr int kBackground = -1;

struct TrainingTargets {
  std::vector<int> class_label;  // kBackground, kUnknownLabel or a known class id
  std::vector<int> objectness;   // 0 or 1
  std::vector<std::optional<BoundingBox>> box;

  std::size_t size() const { return class_label.size(); }
  friend bool operator==(const TrainingTargets&, const TrainingTargets&) = default;
};

// Throws ContractError when a query is both matched and pseudo-labeled.
TrainingTargets build_training_targets(const MatchResult& match,
                                       std::span<const Instance> gts,
                                       const PseudoLabelSet& pseudo,
                                       std::size_t num_queries);

// Classifier column per query (kBackground for none). With novelty off the
// unknown pseudo-labels become background for the classifier.
std::vector<int> class_columns(const TrainingTargets& targets,
                               const data::ClassIndex& classes, bool novelty);
// Column 0 for objectness positives, kBackground otherwise.
std::vector<int> objectness_columns(const TrainingTargets& targets);

}  // namespace owdetr::openworld
