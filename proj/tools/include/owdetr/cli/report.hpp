#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "owdetr/cli/pipeline.hpp"
#include "owdetr/metrics/metrics.hpp"
#include "owdetr/protocol/episode.hpp"

namespace owdetr::cli {

// One JSON line per epoch: phase, task, epoch, L_n, L_r, L_o, L, seconds.
std::string epoch_log_line(const protocol::EpochLog& log);
std::vector<protocol::EpochLog> read_epoch_logs(std::istream& in);

// Task rows with U-Recall, mAP (previous / current / both), WI and A-OSE;
// absent values print as "-".
std::string task_table_markdown(const std::vector<metrics::EvalReport>& reports);
std::string task_table_json(const std::vector<metrics::EvalReport>& reports);

// Baseline / +NC / full rows with per-task U-Recall and mAP, medians over seeds.
std::string ablation_table_markdown(const std::vector<AblationRun>& runs);
std::string ablation_json(const std::vector<AblationRun>& runs);

// Standalone SVG documents.
std::string loss_curve_svg(const std::vector<protocol::EpochLog>& logs);
std::string bar_chart_svg(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

}  // namespace owdetr::cli
