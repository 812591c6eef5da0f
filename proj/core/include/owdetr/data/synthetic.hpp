#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <vector>

#include "owdetr/data/raster.hpp"
#include "owdetr/data/types.hpp"

namespace owdetr::data {

struct RenderParams {
  int image_size = 64;
  double noise = 0.04;     // stddev of additive Gaussian pixel noise
  int min_objects = 1;
  int max_objects = 4;
  int min_extent = 12;     // shape footprint edge, pixels
  int max_extent = 26;

  friend bool operator==(const RenderParams&, const RenderParams&) = default;
};

struct TaskSplitConfig {
  // Ordered, pairwise disjoint class-id sets; their union must be 1..8.
  std::vector<std::vector<int>> tasks;
  int images_per_task_train = 40;
  int images_test = 40;
  RenderParams render;
  // When false, a training image of task t only shows classes of tasks <= t.
  bool future_objects_in_train = true;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t num_tasks() const { return tasks.size(); }
  // Classes introduced in tasks 0..t inclusive, ascending.
  std::vector<int> classes_up_to(std::size_t t) const;

  friend bool operator==(const TaskSplitConfig&, const TaskSplitConfig&) = default;
};

// Four tasks of two shapes each.
TaskSplitConfig default_split();
// Grouped by shape family (round / angular / star-like / elongated), the
// analogue of a super-category split.
TaskSplitConfig family_split();

struct RenderedObject {
  int label = 0;
  // Tight inclusive pixel bounds of the lit mask.
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::vector<std::uint8_t> mask;  // image-sized, 1 where the shape is lit
};

struct RenderedImage {
  Raster raster;
  std::vector<RenderedObject> objects;
};

// Renders one image from its own sub-seed. `allowed` lists the classes that
// may appear; a non-empty `first` restricts the first object's class.
RenderedImage render_image(const RenderParams& params,
                           const std::vector<int>& allowed, std::uint64_t seed,
                           const std::vector<int>& first = {});

struct GeneratedDataset {
  std::vector<DatasetManifest> train;  // one per task
  DatasetManifest test;
  std::map<std::int64_t, Raster> rasters;
};

// Deterministic under cfg.seed. Every training image of task t holds at least
// one object of that task (unless the canvas is too crowded). Train manifest
// of task t annotates only that task's classes; the test manifest annotates
// every object with its true label.
GeneratedDataset generate_dataset(const TaskSplitConfig& cfg);

// Writes images/<id>.ppm, train_task<k>.jsonl (k = 1..T) and test.jsonl.
void write_dataset(const GeneratedDataset& ds, const std::filesystem::path& dir);

std::filesystem::path train_manifest_path(const std::filesystem::path& dir,
                                          std::size_t task_index);
std::filesystem::path test_manifest_path(const std::filesystem::path& dir);

enum class ProjectionMode { kTrain, kEval };

// kTrain drops annotations whose label is not known; kEval rewrites them to
// the unknown label and keeps them.
DatasetManifest project_to_task(const DatasetManifest& manifest,
                                const std::set<int>& known,
                                ProjectionMode mode);

// Pixels + normalized instances for every image of a manifest, in manifest
// order.
std::vector<LabeledImage> materialize(const DatasetManifest& manifest,
                                      const std::map<std::int64_t, Raster>& rasters);
// Same, reading rasters from disk relative to `base_dir`.
std::vector<LabeledImage> materialize(const DatasetManifest& manifest,
                                      const std::filesystem::path& base_dir);

}  // namespace owdetr::data
