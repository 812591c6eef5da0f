#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "owdetr/data/types.hpp"
#include "owdetr/protocol/inference.hpp"

namespace owdetr::metrics {

using data::BoundingBox;
using data::Instance;
using protocol::Detection;
using protocol::DetectionSet;
using GroundTruth = std::vector<Instance>;

inline constexpr double kIouThreshold = 0.5;

double iou(const BoundingBox& a, const BoundingBox& b);

struct MatchFlags {
  std::vector<bool> tp;          // per detection
  std::vector<bool> gt_matched;  // per ground-truth instance
};

// In score order, a detection is a true positive when its best-IoU unmatched
// GT of the same label reaches iou_thresh. Throws ContractError when the
// detections are not sorted by score.
MatchFlags match_greedy(std::span<const Detection> dets, std::span<const Instance> gts,
                        double iou_thresh = kIouThreshold);

struct ScoredFlag {
  double score = 0.0;
  bool tp = false;
};

// All-point interpolated AP. Entries are ranked by score with a stable sort.
double average_precision(std::span<const ScoredFlag> ranked, std::size_t n_gt);

// Fraction of unknown GT recovered by unknown-labeled detections; absent
// without unknown GT.
std::optional<double> unknown_recall(std::span<const DetectionSet> dets,
                                     std::span<const GroundTruth> gts,
                                     double iou_thresh = kIouThreshold);

struct WildernessImpact {
  double value = 0.0;
  double precision_known = 0.0;      // P_K
  double precision_with_unknown = 0.0;  // P_{K u U}
  std::string reason;                // set when the read point deviates
};

// P_K / P_{K u U} - 1 over the pooled known-class detections, both read at
// the first rank whose known recall reaches recall_level. A known-class false
// positive covering an unknown GT is ignored for P_K and counted for
// P_{K u U}. If recall_level is never reached both precisions are read at the
// last true positive; with no true positive WI is 0.
WildernessImpact wilderness_impact(std::span<const DetectionSet> dets,
                                   std::span<const GroundTruth> gts,
                                   double recall_level = 0.8,
                                   double iou_thresh = kIouThreshold);

enum class AoseCounting { kInstances, kDetections };

// Unknown GT instances covered by a known-class detection, or with
// kDetections the number of such detections.
std::uint64_t a_ose(std::span<const DetectionSet> dets, std::span<const GroundTruth> gts,
                    AoseCounting counting = AoseCounting::kInstances,
                    double iou_thresh = kIouThreshold);

struct EvalOptions {
  double iou_thresh = kIouThreshold;
  double wi_recall = 0.8;
  AoseCounting aose_counting = AoseCounting::kInstances;

  friend bool operator==(const EvalOptions&, const EvalOptions&) = default;
};

struct EvalReport {
  std::size_t task = 0;
  std::vector<int> previous;
  std::vector<int> current;
  std::map<int, double> ap;  // per known class
  std::optional<double> map_previous;
  std::optional<double> map_current;
  std::optional<double> map_both;
  std::optional<double> u_recall;
  std::optional<double> wi;
  std::string wi_note;
  std::optional<std::uint64_t> a_ose;
  std::size_t images = 0;
  std::map<int, std::size_t> gt_per_class;  // label 0 counts unknown GT

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate(std::span<const DetectionSet> dets, std::span<const GroundTruth> gts,
                    const std::vector<int>& previous, const std::vector<int>& current,
                    std::size_t task, const EvalOptions& options = {});

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
std::string report_to_text(const EvalReport& report);

// One JSON record per detection: image_id, label, score, box [cx, cy, w, h]
// and the source query.
void write_detections(std::span<const DetectionSet> dets, std::ostream& out);
// Groups records by image in order of first appearance. Throws ParseError with
// the line number on malformed input.
std::vector<DetectionSet> read_detections(std::istream& in);

}  // namespace owdetr::metrics
