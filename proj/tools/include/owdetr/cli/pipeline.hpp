#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "owdetr/cli/config.hpp"
#include "owdetr/data/synthetic.hpp"
#include "owdetr/metrics/metrics.hpp"
#include "owdetr/protocol/episode.hpp"

namespace owdetr::cli {

// Manifests plus decoded rasters of one generated benchmark.
struct DatasetView {
  data::TaskSplitConfig split;
  std::vector<data::DatasetManifest> train;  // one per task
  data::DatasetManifest test;
  std::map<std::int64_t, data::Raster> rasters;

  static DatasetView from_generated(data::GeneratedDataset ds, const data::TaskSplitConfig& split);
  // Throws IoError naming the first missing file.
  static DatasetView load(const std::filesystem::path& dir, const data::TaskSplitConfig& split);

  std::set<int> known_after(std::size_t task_index) const;
  // Task `task_index` training images with annotations of known classes.
  std::vector<data::LabeledImage> train_images(std::size_t task_index) const;
  // Union of training images of tasks 0..task_index, for exemplar sampling.
  std::vector<data::LabeledImage> replay_pool(std::size_t task_index) const;
  // Test images with classes outside K relabeled unknown.
  std::vector<data::LabeledImage> test_images(const std::set<int>& known) const;
  std::map<std::int64_t, numerics::Tensor> pixels() const;
};

struct TaskResult {
  std::size_t task = 0;  // 1-based
  std::size_t classifier_width = 0;
  std::vector<protocol::EpochLog> logs;
  std::optional<metrics::EvalReport> before_finetune;
  metrics::EvalReport report;
};

struct Hooks {
  protocol::EpochCallback on_epoch;
  // stage is "train" after train_task and "final" after finetuning.
  std::function<void(std::size_t task, const std::string& stage,
                     const protocol::EpisodeState& state)>
      on_state;
};

// Task-1 training from a fresh state.
protocol::EpisodeState train_first_task(const RunConfig& cfg, const DatasetView& ds,
                                        TaskResult& result, const Hooks& hooks = {});

// oracle_step, train_task, exemplar store and replay finetune for the next
// task. When before_finetune is set, evaluates between training and
// finetuning.
void train_next_task(protocol::EpisodeState& state, const RunConfig& cfg,
                     const DatasetView& ds, TaskResult& result, bool eval_before_finetune,
                     const Hooks& hooks = {});

metrics::EvalReport evaluate_state(const protocol::EpisodeState& state, const RunConfig& cfg,
                                   const DatasetView& ds,
                                   std::vector<protocol::DetectionSet>* detections = nullptr);

// All tasks of the split, evaluating after each.
std::vector<TaskResult> run_protocol(const RunConfig& cfg, const DatasetView& ds,
                                     bool eval_before_finetune, const Hooks& hooks = {});

enum class Variant { kBaseline, kNovelty, kFull };

inline constexpr Variant kVariants[] = {Variant::kBaseline, Variant::kNovelty, Variant::kFull};

std::string variant_name(Variant v);  // "Baseline", "+NC", "full"
std::string variant_slug(Variant v);  // "baseline", "nc", "full"
RunConfig with_variant(RunConfig cfg, Variant v);

// Mean U-Recall over the evaluations that have unknown GT; 0 when the
// metric is absent everywhere.
double mean_unknown_recall(const std::vector<TaskResult>& results);

struct AblationRun {
  Variant variant;
  std::uint64_t seed;
  std::vector<TaskResult> tasks;
};

// Every variant for every seed, in variant-major order.
std::vector<AblationRun> run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const AblationRun&)>& on_run = {});

double median(std::vector<double> values);

}  // namespace owdetr::cli
