#include "owdetr/metrics/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "owdetr/errors.hpp"

namespace owdetr::metrics {
namespace {

using nlohmann::json;

void check_aligned(std::span<const DetectionSet> dets, std::span<const GroundTruth> gts) {
  if (dets.size() != gts.size()) {
    throw DimensionError("metrics: " + std::to_string(dets.size()) + " detection sets for " +
                         std::to_string(gts.size()) + " images");
  }
}

double max_iou_with_label(const BoundingBox& box, std::span<const Instance> gts, int label) {
  double best = 0.0;
  for (const auto& g : gts) {
    if (g.label == label) best = std::max(best, iou(box, g.box));
  }
  return best;
}

std::vector<Detection> with_label(std::span<const Detection> dets, bool unknown) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if ((d.label == data::kUnknownLabel) == unknown) out.push_back(d);
  }
  return out;
}

std::optional<double> mean_ap(const std::map<int, double>& ap, const std::vector<int>& classes) {
  if (classes.empty()) return std::nullopt;
  double total = 0.0;
  for (int c : classes) total += ap.at(c);
  return total / static_cast<double>(classes.size());
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x1(), b.x1()) - std::max(a.x0(), b.x0()));
  const double ih = std::max(0.0, std::min(a.y1(), b.y1()) - std::max(a.y0(), b.y0()));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchFlags match_greedy(std::span<const Detection> dets, std::span<const Instance> gts,
                        double iou_thresh) {
  for (std::size_t i = 1; i < dets.size(); ++i) {
    if (dets[i].score > dets[i - 1].score) {
      throw ContractError("match_greedy: detections are not sorted by score");
    }
  }
  MatchFlags flags{std::vector<bool>(dets.size(), false),
                   std::vector<bool>(gts.size(), false)};
  for (std::size_t i = 0; i < dets.size(); ++i) {
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (flags.gt_matched[j] || gts[j].label != dets[i].label) continue;
      const double v = iou(dets[i].box, gts[j].box);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_thresh) {
      flags.tp[i] = true;
      flags.gt_matched[best_j] = true;
    }
  }
  return flags;
}

double average_precision(std::span<const ScoredFlag> ranked, std::size_t n_gt) {
  if (n_gt == 0 || ranked.empty()) return 0.0;
  std::vector<ScoredFlag> sorted(ranked.begin(), ranked.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredFlag& a, const ScoredFlag& b) { return a.score > b.score; });
  std::vector<double> rec{0.0}, prec{0.0};
  std::size_t tp = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].tp) ++tp;
    rec.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
  }
  rec.push_back(1.0);
  prec.push_back(0.0);
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0.0;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    if (rec[i] != rec[i - 1]) ap += (rec[i] - rec[i - 1]) * prec[i];
  }
  return ap;
}

std::optional<double> unknown_recall(std::span<const DetectionSet> dets,
                                     std::span<const GroundTruth> gts, double iou_thresh) {
  check_aligned(dets, gts);
  std::size_t total = 0, found = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto unknown = with_label(dets[i].detections, true);
    const auto flags = match_greedy(unknown, gts[i], iou_thresh);
    for (std::size_t j = 0; j < gts[i].size(); ++j) {
      if (gts[i][j].label != data::kUnknownLabel) continue;
      ++total;
      if (flags.gt_matched[j]) ++found;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(found) / static_cast<double>(total);
}

WildernessImpact wilderness_impact(std::span<const DetectionSet> dets,
                                   std::span<const GroundTruth> gts, double recall_level,
                                   double iou_thresh) {
  check_aligned(dets, gts);
  if (!(recall_level > 0.0 && recall_level <= 1.0)) {
    throw ContractError("wilderness_impact: recall level must lie in (0, 1]");
  }
  enum class Kind { kTrue, kFalse, kWild };
  struct Entry {
    double score;
    Kind kind;
  };
  std::vector<Entry> pooled;
  std::size_t n_known_gt = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    GroundTruth known_gt;
    for (const auto& g : gts[i]) {
      if (g.label != data::kUnknownLabel) known_gt.push_back(g);
    }
    n_known_gt += known_gt.size();
    const auto known = with_label(dets[i].detections, false);
    const auto flags = match_greedy(known, known_gt, iou_thresh);
    for (std::size_t d = 0; d < known.size(); ++d) {
      Kind kind = Kind::kTrue;
      if (!flags.tp[d]) {
        kind = max_iou_with_label(known[d].box, gts[i], data::kUnknownLabel) >= iou_thresh
                   ? Kind::kWild
                   : Kind::kFalse;
      }
      pooled.push_back({known[d].score, kind});
    }
  }
  WildernessImpact out;
  if (n_known_gt == 0) {
    out.value = 0.0;
    out.reason = "no known ground truth";
    return out;
  }
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const Entry& a, const Entry& b) { return a.score > b.score; });
  std::size_t tp = 0, fp = 0, wild = 0;
  std::size_t best_tp = 0, best_fp = 0, best_wild = 0;
  auto read = [&out](std::size_t t, std::size_t f, std::size_t w) {
    if (t == 0) {
      out.value = 0.0;
      return;
    }
    out.precision_known = static_cast<double>(t) / static_cast<double>(t + f);
    out.precision_with_unknown = static_cast<double>(t) / static_cast<double>(t + f + w);
    out.value = out.precision_known / out.precision_with_unknown - 1.0;
  };
  for (const auto& e : pooled) {
    if (e.kind == Kind::kTrue) ++tp;
    if (e.kind == Kind::kFalse) ++fp;
    if (e.kind == Kind::kWild) ++wild;
    if (e.kind == Kind::kTrue) {
      best_tp = tp;
      best_fp = fp;
      best_wild = wild;
    }
    if (static_cast<double>(tp) / static_cast<double>(n_known_gt) >= recall_level) {
      read(tp, fp, wild);
      return out;
    }
  }
  read(best_tp, best_fp, best_wild);
  std::ostringstream msg;
  msg << "known recall " << std::fixed << std::setprecision(3)
      << static_cast<double>(best_tp) / static_cast<double>(n_known_gt) << " never reaches "
      << recall_level << "; read at the highest recall";
  out.reason = msg.str();
  return out;
}

std::uint64_t a_ose(std::span<const DetectionSet> dets, std::span<const GroundTruth> gts,
                    AoseCounting counting, double iou_thresh) {
  check_aligned(dets, gts);
  std::uint64_t count = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const auto known = with_label(dets[i].detections, false);
    if (counting == AoseCounting::kInstances) {
      for (const auto& g : gts[i]) {
        if (g.label != data::kUnknownLabel) continue;
        if (std::any_of(known.begin(), known.end(), [&](const Detection& d) {
              return iou(d.box, g.box) >= iou_thresh;
            })) {
          ++count;
        }
      }
    } else {
      for (const auto& d : known) {
        if (max_iou_with_label(d.box, gts[i], data::kUnknownLabel) >= iou_thresh) ++count;
      }
    }
  }
  return count;
}

EvalReport evaluate(std::span<const DetectionSet> dets, std::span<const GroundTruth> gts,
                    const std::vector<int>& previous, const std::vector<int>& current,
                    std::size_t task, const EvalOptions& options) {
  check_aligned(dets, gts);
  EvalReport r;
  r.task = task;
  r.previous = previous;
  r.current = current;
  r.images = gts.size();
  for (const auto& image : gts) {
    for (const auto& g : image) ++r.gt_per_class[g.label];
  }
  std::vector<int> known = previous;
  known.insert(known.end(), current.begin(), current.end());
  for (int c : known) {
    std::vector<ScoredFlag> ranked;
    std::size_t n_gt = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      std::vector<Detection> mine;
      for (const auto& d : dets[i].detections) {
        if (d.label == c) mine.push_back(d);
      }
      GroundTruth theirs;
      for (const auto& g : gts[i]) {
        if (g.label == c) theirs.push_back(g);
      }
      n_gt += theirs.size();
      const auto flags = match_greedy(mine, theirs, options.iou_thresh);
      for (std::size_t d = 0; d < mine.size(); ++d) ranked.push_back({mine[d].score, flags.tp[d]});
    }
    r.ap[c] = average_precision(ranked, n_gt);
  }
  r.map_previous = mean_ap(r.ap, previous);
  r.map_current = mean_ap(r.ap, current);
  r.map_both = mean_ap(r.ap, known);

  if (r.gt_per_class.count(data::kUnknownLabel) != 0) {
    r.u_recall = unknown_recall(dets, gts, options.iou_thresh);
    const auto wi = wilderness_impact(dets, gts, options.wi_recall, options.iou_thresh);
    r.wi = wi.value;
    r.wi_note = wi.reason;
    r.a_ose = a_ose(dets, gts, options.aose_counting, options.iou_thresh);
  }
  return r;
}

std::string report_to_json(const EvalReport& r) {
  json ap = json::object();
  for (const auto& [c, v] : r.ap) ap[std::to_string(c)] = v;
  json gt = json::object();
  for (const auto& [c, n] : r.gt_per_class) gt[std::to_string(c)] = n;
  const json j = {{"task", r.task},
                  {"previous", r.previous},
                  {"current", r.current},
                  {"ap", ap},
                  {"map_previous", optional_json(r.map_previous)},
                  {"map_current", optional_json(r.map_current)},
                  {"map_both", optional_json(r.map_both)},
                  {"u_recall", optional_json(r.u_recall)},
                  {"wi", optional_json(r.wi)},
                  {"wi_note", r.wi_note},
                  {"a_ose", r.a_ose ? json(*r.a_ose) : json(nullptr)},
                  {"images", r.images},
                  {"gt_per_class", gt}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    EvalReport r;
    r.task = j.at("task");
    r.previous = j.at("previous").get<std::vector<int>>();
    r.current = j.at("current").get<std::vector<int>>();
    for (const auto& [k, v] : j.at("ap").items()) r.ap[std::stoi(k)] = v.get<double>();
    r.map_previous = optional_from(j.at("map_previous"));
    r.map_current = optional_from(j.at("map_current"));
    r.map_both = optional_from(j.at("map_both"));
    r.u_recall = optional_from(j.at("u_recall"));
    r.wi = optional_from(j.at("wi"));
    r.wi_note = j.at("wi_note");
    if (!j.at("a_ose").is_null()) r.a_ose = j.at("a_ose").get<std::uint64_t>();
    r.images = j.at("images");
    for (const auto& [k, v] : j.at("gt_per_class").items()) {
      r.gt_per_class[std::stoi(k)] = v.get<std::size_t>();
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("eval report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("eval report: bad class key: ") + e.what());
  }
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream out;
  out << "task " << r.task << " evaluation (" << r.images << " images)\n";
  out << "  mAP previous  " << percent(r.map_previous) << "\n";
  out << "  mAP current   " << percent(r.map_current) << "\n";
  out << "  mAP both      " << percent(r.map_both) << "\n";
  out << "  U-Recall      " << percent(r.u_recall) << "\n";
  char buf[64];
  if (r.wi) {
    std::snprintf(buf, sizeof(buf), "%.4f", *r.wi);
    out << "  WI            " << buf << (r.wi_note.empty() ? "" : "  (" + r.wi_note + ")")
        << "\n";
  } else {
    out << "  WI            -\n";
  }
  out << "  A-OSE         " << (r.a_ose ? std::to_string(*r.a_ose) : "-") << "\n";
  out << "  per-class AP\n";
  for (const auto& [c, v] : r.ap) {
    const auto it = r.gt_per_class.find(c);
    const std::size_t n = it == r.gt_per_class.end() ? 0 : it->second;
    std::snprintf(buf, sizeof(buf), "%6.2f", 100.0 * v);
    out << "    " << std::left << std::setw(10) << data::class_name(c) << buf
        << "  (" << n << " gt)\n";
  }
  return out.str();
}

void write_detections(std::span<const DetectionSet> dets, std::ostream& out) {
  for (const auto& set : dets) {
    for (const auto& d : set.detections) {
      const json j = {{"image_id", set.image_id},
                      {"label", d.label},
                      {"score", d.score},
                      {"box", {d.box.cx, d.box.cy, d.box.w, d.box.h}},
                      {"query", d.query}};
      out << j.dump() << "\n";
    }
  }
}

std::vector<DetectionSet> read_detections(std::istream& in) {
  std::vector<DetectionSet> sets;
  std::map<std::int64_t, std::size_t> slot;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("image_id").get<std::int64_t>();
      const auto& b = j.at("box");
      if (b.size() != 4) throw ParseError("box must have 4 numbers");
      Detection d{j.at("label").get<int>(),
                  j.at("score").get<double>(),
                  {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                  j.contains("query") ? j.at("query").get<std::size_t>() : 0};
      auto [it, inserted] = slot.try_emplace(id, sets.size());
      if (inserted) sets.push_back({id, {}});
      sets[it->second].detections.push_back(d);
    } catch (const std::exception& e) {
      throw ParseError("detections line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sets;
}

}  // namespace owdetr::metrics
