#include "owdetr/cli/report.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "owdetr/errors.hpp"

namespace owdetr::cli {
namespace {

using nlohmann::json;

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string pct(const std::optional<double>& v) { return v ? fixed(100.0 * *v, 2) : "-"; }

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::size_t num_tasks(const std::vector<AblationRun>& runs) {
  std::size_t n = 0;
  for (const auto& r : runs) n = std::max(n, r.tasks.size());
  return n;
}

// Median over seeds of one per-task quantity, absent when no seed has it.
template <typename Get>
std::optional<double> median_over(const std::vector<const AblationRun*>& runs, std::size_t t,
                                  Get get) {
  std::vector<double> values;
  for (const auto* r : runs) {
    if (t < r->tasks.size()) {
      if (const auto v = get(r->tasks[t].report)) values.push_back(*v);
    }
  }
  if (values.empty()) return std::nullopt;
  return median(values);
}

std::map<Variant, std::vector<const AblationRun*>> by_variant(const std::vector<AblationRun>& runs) {
  std::map<Variant, std::vector<const AblationRun*>> out;
  for (const auto& r : runs) out[r.variant].push_back(&r);
  return out;
}

}  // namespace

std::string epoch_log_line(const protocol::EpochLog& l) {
  return json{{"phase", l.phase}, {"task", l.task}, {"epoch", l.epoch}, {"L_n", l.l_n},
              {"L_r", l.l_r},     {"L_o", l.l_o},   {"L", l.total},     {"seconds", l.seconds}}
      .dump();
}

std::vector<protocol::EpochLog> read_epoch_logs(std::istream& in) {
  std::vector<protocol::EpochLog> logs;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      logs.push_back({j.at("phase"), j.at("task"), j.at("epoch"), j.at("L_n"), j.at("L_r"),
                      j.at("L_o"), j.at("L"), j.at("seconds")});
    } catch (const json::exception& e) {
      throw ParseError("training log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return logs;
}

std::string task_table_markdown(const std::vector<metrics::EvalReport>& reports) {
  std::ostringstream out;
  out << "| Task | U-Recall | mAP previous | mAP current | mAP both | WI | A-OSE |\n";
  out << "|---|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    out << "| " << r.task << " | " << pct(r.u_recall) << " | " << pct(r.map_previous) << " | "
        << pct(r.map_current) << " | " << pct(r.map_both) << " | "
        << (r.wi ? fixed(*r.wi, 4) : "-") << " | "
        << (r.a_ose ? std::to_string(*r.a_ose) : "-") << " |\n";
  }
  return out.str();
}

std::string task_table_json(const std::vector<metrics::EvalReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    rows.push_back({{"task", r.task},
                    {"u_recall", opt(r.u_recall)},
                    {"map_previous", opt(r.map_previous)},
                    {"map_current", opt(r.map_current)},
                    {"map_both", opt(r.map_both)},
                    {"wi", opt(r.wi)},
                    {"a_ose", r.a_ose ? json(*r.a_ose) : json(nullptr)}});
  }
  return json{{"tasks", rows}}.dump(2) + "\n";
}

std::string ablation_table_markdown(const std::vector<AblationRun>& runs) {
  const std::size_t tasks = num_tasks(runs);
  const auto groups = by_variant(runs);
  std::ostringstream out;
  out << "| Variant |";
  for (std::size_t t = 1; t <= tasks; ++t) out << " T" << t << " U-Recall | T" << t << " mAP |";
  out << " mean U-Recall |\n|---|";
  for (std::size_t t = 0; t < 2 * tasks + 1; ++t) out << "---|";
  out << "\n";
  for (Variant v : kVariants) {
    const auto it = groups.find(v);
    if (it == groups.end()) continue;
    out << "| " << variant_name(v) << " |";
    for (std::size_t t = 0; t < tasks; ++t) {
      out << " " << pct(median_over(it->second, t, [](const auto& r) { return r.u_recall; }))
          << " | " << pct(median_over(it->second, t, [](const auto& r) { return r.map_both; }))
          << " |";
    }
    std::vector<double> means;
    for (const auto* r : it->second) means.push_back(mean_unknown_recall(r->tasks));
    out << " " << fixed(100.0 * median(means), 2) << " |\n";
  }
  return out.str();
}

std::string ablation_json(const std::vector<AblationRun>& runs) {
  json arr = json::array();
  for (const auto& r : runs) {
    json tasks = json::array();
    for (const auto& t : r.tasks) tasks.push_back(json::parse(metrics::report_to_json(t.report)));
    arr.push_back({{"variant", variant_name(r.variant)},
                   {"seed", r.seed},
                   {"mean_u_recall", mean_unknown_recall(r.tasks)},
                   {"tasks", tasks}});
  }
  return json{{"runs", arr}}.dump(2) + "\n";
}

std::string loss_curve_svg(const std::vector<protocol::EpochLog>& logs) {
  constexpr double kW = 640, kH = 360, kPad = 48;
  double top = 0.0;
  for (const auto& l : logs) top = std::max(top, l.total);
  if (top <= 0.0) top = 1.0;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << "training loss per epoch</text>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad / 2
      << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad << "\" y2=\""
      << kH - kPad << "\" stroke=\"black\"/>\n";
  out << "<text x=\"4\" y=\"" << kPad + 4 << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << fixed(top, 2) << "</text>\n";
  const double n = static_cast<double>(std::max<std::size_t>(logs.size(), 2) - 1);
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const double x = kPad + (kW - 1.5 * kPad) * static_cast<double>(i) / n;
    const double y = kH - kPad - (kH - 2 * kPad) * logs[i].total / top;
    const char* color = logs[i].phase == "finetune" ? "#d95f02" : "#1b9e77";
    out << "<circle cx=\"" << fixed(x, 2) << "\" cy=\"" << fixed(y, 2) << "\" r=\"3\" fill=\""
        << color << "\"><title>task " << logs[i].task << " " << logs[i].phase << " epoch "
        << logs[i].epoch << ": " << fixed(logs[i].total, 4) << "</title></circle>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  constexpr double kW = 480, kH = 320, kPad = 48;
  double top = 0.0;
  for (double v : values) top = std::max(top, v);
  if (top <= 0.0) top = 1.0;
  const double slot = (kW - 2 * kPad) / static_cast<double>(std::max<std::size_t>(values.size(), 1));
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kPad << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">"
      << escape(title) << "</text>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - kPad
      << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = (kH - 2.5 * kPad) * values[i] / top;
    const double x = kPad + slot * (static_cast<double>(i) + 0.15);
    out << "<rect x=\"" << fixed(x, 2) << "\" y=\"" << fixed(kH - kPad - h, 2) << "\" width=\""
        << fixed(0.7 * slot, 2) << "\" height=\"" << fixed(h, 2) << "\" fill=\"#7570b3\"/>\n";
    out << "<text x=\"" << fixed(x, 2) << "\" y=\"" << fixed(kH - kPad - h - 4, 2)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << fixed(values[i], 2) << "</text>\n";
    out << "<text x=\"" << fixed(x, 2) << "\" y=\"" << kH - kPad + 16
        << "\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape(i < labels.size() ? labels[i] : "") << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace owdetr::cli
