#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "owdetr/cli/config.hpp"

namespace owdetr::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitUsage = 2,
  kExitMissing = 3,    // a prerequisite artifact is absent
  kExitDivergence = 4,
};

struct CommandOptions {
  std::optional<std::size_t> task;  // 1-based; default depends on the command
  bool all = false;                 // incremental: run every remaining task
  std::string stage = "final";      // eval: "final" or "train" (before finetuning)
  std::size_t seeds = 1;            // ablate: consecutive seeds from cfg.seed
};

// Output layout under cfg.output_dir.
std::filesystem::path data_dir(const RunConfig& cfg);
std::filesystem::path task_dir(const RunConfig& cfg, std::size_t task);
std::filesystem::path checkpoint_path(const RunConfig& cfg, std::size_t task,
                                      const std::string& stage = "final");

// Runs gen-data, train, incremental, eval, report or ablate. Progress goes to
// `log`, errors to `err`; returns an ExitCode.
int run_command(const std::string& command, const RunConfig& cfg, const CommandOptions& options,
                std::ostream& log, std::ostream& err);

// Full command line entry point.
int main_entry(int argc, char** argv);

}  // namespace owdetr::cli
