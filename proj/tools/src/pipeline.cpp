#include "owdetr/cli/pipeline.hpp"

#include <algorithm>
#include <set>

#include "owdetr/data/manifest.hpp"
#include "owdetr/errors.hpp"
#include "owdetr/protocol/inference.hpp"

namespace owdetr::cli {

DatasetView DatasetView::from_generated(data::GeneratedDataset ds,
                                        const data::TaskSplitConfig& split) {
  return {split, std::move(ds.train), std::move(ds.test), std::move(ds.rasters)};
}

DatasetView DatasetView::load(const std::filesystem::path& dir,
                              const data::TaskSplitConfig& split) {
  auto need = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw IoError("missing dataset file " + p.string());
    return p;
  };
  DatasetView v;
  v.split = split;
  for (std::size_t t = 0; t < split.num_tasks(); ++t) {
    v.train.push_back(data::load_manifest(need(data::train_manifest_path(dir, t))));
  }
  v.test = data::load_manifest(need(data::test_manifest_path(dir)));
  auto read_all = [&](const data::DatasetManifest& m) {
    for (const auto& rec : m.images) {
      if (!v.rasters.contains(rec.image_id)) {
        v.rasters.emplace(rec.image_id, data::read_ppm(need(dir / rec.file)));
      }
    }
  };
  for (const auto& m : v.train) read_all(m);
  read_all(v.test);
  return v;
}

std::set<int> DatasetView::known_after(std::size_t task_index) const {
  const auto classes = split.classes_up_to(task_index);
  return {classes.begin(), classes.end()};
}

std::vector<data::LabeledImage> DatasetView::train_images(std::size_t task_index) const {
  const auto m = data::project_to_task(train.at(task_index), known_after(task_index),
                                       data::ProjectionMode::kTrain);
  return data::materialize(m, rasters);
}

std::vector<data::LabeledImage> DatasetView::replay_pool(std::size_t task_index) const {
  std::vector<data::LabeledImage> pool;
  for (std::size_t t = 0; t <= task_index; ++t) {
    auto images = train_images(t);
    pool.insert(pool.end(), std::make_move_iterator(images.begin()),
                std::make_move_iterator(images.end()));
  }
  return pool;
}

std::vector<data::LabeledImage> DatasetView::test_images(const std::set<int>& known) const {
  return data::materialize(data::project_to_task(test, known, data::ProjectionMode::kEval),
                           rasters);
}

std::map<std::int64_t, numerics::Tensor> DatasetView::pixels() const {
  std::map<std::int64_t, numerics::Tensor> out;
  for (const auto& [id, r] : rasters) out.emplace(id, data::to_tensor(r));
  return out;
}

metrics::EvalReport evaluate_state(const protocol::EpisodeState& state, const RunConfig& cfg,
                                   const DatasetView& ds,
                                   std::vector<protocol::DetectionSet>* detections) {
  const auto& known = state.labels.known();
  const auto images = ds.test_images({known.begin(), known.end()});
  protocol::InferConfig infer = cfg.infer;
  infer.novelty = cfg.train.loss.novelty;
  auto dets = protocol::infer_all(state.network, images, state.labels.index(), infer, cfg.workers);
  std::vector<metrics::GroundTruth> gts;
  gts.reserve(images.size());
  for (const auto& im : images) gts.push_back(im.instances);
  auto report = metrics::evaluate(dets, gts, state.labels.previous(), state.labels.current(),
                                  state.labels.task(), cfg.eval);
  if (detections != nullptr) *detections = std::move(dets);
  return report;
}

protocol::EpisodeState train_first_task(const RunConfig& cfg, const DatasetView& ds,
                                        TaskResult& result, const Hooks& hooks) {
  auto state = protocol::EpisodeState::initial(cfg.model, ds.split.tasks.at(0), cfg.seed);
  const auto images = ds.train_images(0);
  result.task = 1;
  result.logs = protocol::train_task(state, images, cfg.train, hooks.on_epoch);
  result.classifier_width = state.network.heads().classifier.out_features();
  if (hooks.on_state) {
    hooks.on_state(1, "train", state);
    hooks.on_state(1, "final", state);
  }
  return state;
}

void train_next_task(protocol::EpisodeState& state, const RunConfig& cfg,
                     const DatasetView& ds, TaskResult& result, bool eval_before_finetune,
                     const Hooks& hooks) {
  const std::size_t t = state.labels.task();  // index of the task to add
  if (t >= ds.split.num_tasks()) {
    throw ContractError("all " + std::to_string(ds.split.num_tasks()) +
                        " tasks are already trained");
  }
  protocol::oracle_step(state, ds.split.tasks[t]);
  result.task = t + 1;
  const auto images = ds.train_images(t);
  result.logs = protocol::train_task(state, images, cfg.train, hooks.on_epoch);
  if (hooks.on_state) hooks.on_state(t + 1, "train", state);
  if (eval_before_finetune) result.before_finetune = evaluate_state(state, cfg, ds);

  state.exemplars = protocol::build_exemplar_store(
      ds.replay_pool(t), state.labels.known(), cfg.train.exemplar_cap,
      numerics::Rng::derive(cfg.seed, 0x6578'656d'0000ULL + t));
  if (!state.exemplars.empty()) {
    auto ft = protocol::incremental_finetune(state, ds.pixels(), cfg.train, hooks.on_epoch);
    result.logs.insert(result.logs.end(), ft.begin(), ft.end());
  }
  result.classifier_width = state.network.heads().classifier.out_features();
  if (hooks.on_state) hooks.on_state(t + 1, "final", state);
}

std::vector<TaskResult> run_protocol(const RunConfig& cfg, const DatasetView& ds,
                                     bool eval_before_finetune, const Hooks& hooks) {
  std::vector<TaskResult> results(1);
  auto state = train_first_task(cfg, ds, results[0], hooks);
  results[0].report = evaluate_state(state, cfg, ds);
  while (state.labels.task() < ds.split.num_tasks()) {
    TaskResult r;
    train_next_task(state, cfg, ds, r, eval_before_finetune, hooks);
    r.report = evaluate_state(state, cfg, ds);
    results.push_back(std::move(r));
  }
  return results;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "Baseline";
    case Variant::kNovelty: return "+NC";
    case Variant::kFull: return "full";
  }
  return "?";
}

std::string variant_slug(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kNovelty: return "nc";
    case Variant::kFull: return "full";
  }
  return "?";
}

RunConfig with_variant(RunConfig cfg, Variant v) {
  cfg.train.loss.novelty = v != Variant::kBaseline;
  cfg.train.loss.objectness = v == Variant::kFull;
  cfg.infer.novelty = cfg.train.loss.novelty;
  return cfg;
}

double mean_unknown_recall(const std::vector<TaskResult>& results) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : results) {
    if (r.report.gt_per_class.contains(data::kUnknownLabel)) {
      total += r.report.u_recall.value_or(0.0);
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

std::vector<AblationRun> run_ablation(const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                      const std::function<void(const AblationRun&)>& on_run) {
  std::vector<AblationRun> runs;
  for (std::uint64_t seed : seeds) {
    RunConfig seeded = cfg;
    seeded.apply_seed(seed);
    const DatasetView ds =
        DatasetView::from_generated(data::generate_dataset(seeded.split), seeded.split);
    for (Variant v : kVariants) {
      AblationRun run{v, seed, run_protocol(with_variant(seeded, v), ds, false)};
      if (on_run) on_run(run);
      runs.push_back(std::move(run));
    }
  }
  std::stable_sort(runs.begin(), runs.end(), [](const AblationRun& a, const AblationRun& b) {
    return static_cast<int>(a.variant) < static_cast<int>(b.variant);
  });
  return runs;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace owdetr::cli
