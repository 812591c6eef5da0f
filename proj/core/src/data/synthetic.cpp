#include "owdetr/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "owdetr/data/manifest.hpp"
#include "owdetr/errors.hpp"
#include "owdetr/numerics/random.hpp"

namespace owdetr::data {

using numerics::Rng;

void TaskSplitConfig::validate() const {
  if (tasks.empty()) throw ConfigError("tasks: at least one task is required");
  std::set<int> seen;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].empty()) {
      throw ConfigError("tasks[" + std::to_string(t) + "]: task has zero classes");
    }
    for (int c : tasks[t]) {
      if (c < 1 || c > kNumShapeClasses) {
        throw ConfigError("tasks[" + std::to_string(t) + "]: class " +
                          std::to_string(c) + " outside 1.." +
                          std::to_string(kNumShapeClasses));
      }
      if (!seen.insert(c).second) {
        throw ConfigError("tasks: class " + std::to_string(c) +
                          " appears in more than one task");
      }
    }
  }
  if (seen.size() != static_cast<std::size_t>(kNumShapeClasses)) {
    throw ConfigError("tasks: the union of task classes must cover all " +
                      std::to_string(kNumShapeClasses) + " shape classes");
  }
  if (images_per_task_train < 1) throw ConfigError("images_per_task_train must be >= 1");
  if (images_test < 1) throw ConfigError("images_test must be >= 1");
  const auto& r = render;
  if (r.image_size < 16) throw ConfigError("render.image_size must be >= 16");
  if (r.min_objects < 1 || r.max_objects < r.min_objects) {
    throw ConfigError("render.min_objects/max_objects: need 1 <= min <= max");
  }
  if (r.min_extent < 4 || r.max_extent < r.min_extent || r.max_extent > r.image_size) {
    throw ConfigError("render.min_extent/max_extent: need 4 <= min <= max <= image_size");
  }
  if (r.noise < 0) throw ConfigError("render.noise must be >= 0");
}

std::vector<int> TaskSplitConfig::classes_up_to(std::size_t t) const {
  std::vector<int> out;
  for (std::size_t i = 0; i <= t && i < tasks.size(); ++i) {
    out.insert(out.end(), tasks[i].begin(), tasks[i].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TaskSplitConfig default_split() {
  TaskSplitConfig cfg;
  cfg.tasks = {{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  return cfg;
}

TaskSplitConfig family_split() {
  TaskSplitConfig cfg;
  using S = ShapeClass;
  auto id = [](S s) { return static_cast<int>(s); };
  cfg.tasks = {{id(S::kCircle), id(S::kRing)},
               {id(S::kSquare), id(S::kDiamond)},
               {id(S::kTriangle), id(S::kStar)},
               {id(S::kCross), id(S::kBar)}};
  return cfg;
}

namespace {

// Shape membership in a local frame where the footprint spans [-1, 1]^2.
bool inside_shape(int label, double dx, double dy, bool vertical) {
  const double r = std::hypot(dx, dy);
  switch (static_cast<ShapeClass>(label)) {
    case ShapeClass::kCircle:
      return r <= 1.0;
    case ShapeClass::kSquare:
      return std::fabs(dx) <= 0.8 && std::fabs(dy) <= 0.8;
    case ShapeClass::kTriangle:
      return dy <= 1.0 && dy >= -1.0 && std::fabs(dx) <= 0.5 * (dy + 1.0);
    case ShapeClass::kCross:
      return (std::fabs(dx) <= 0.3 && std::fabs(dy) <= 1.0) ||
             (std::fabs(dy) <= 0.3 && std::fabs(dx) <= 1.0);
    case ShapeClass::kRing:
      return r <= 1.0 && r >= 0.55;
    case ShapeClass::kStar: {
      const double theta = std::atan2(dy, dx);
      const double lobe = 0.5 + 0.5 * std::cos(5.0 * theta);
      return r <= 0.4 + 0.6 * lobe * lobe;
    }
    case ShapeClass::kBar:
      return vertical ? (std::fabs(dx) <= 0.3 && std::fabs(dy) <= 1.0)
                      : (std::fabs(dy) <= 0.3 && std::fabs(dx) <= 1.0);
    case ShapeClass::kDiamond:
      return std::fabs(dx) + std::fabs(dy) <= 1.0;
  }
  return false;
}

struct Footprint {
  int x, y, size;
  bool overlaps(const Footprint& o, int margin) const {
    return x < o.x + o.size + margin && o.x < x + size + margin &&
           y < o.y + o.size + margin && o.y < y + size + margin;
  }
};

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

RenderedImage render_image(const RenderParams& params,
                           const std::vector<int>& allowed, std::uint64_t seed,
                           const std::vector<int>& first) {
  if (allowed.empty()) throw ContractError("render_image: no allowed classes");
  Rng rng(seed);
  const int n = params.image_size;
  const auto npix = static_cast<std::size_t>(n) * n;

  std::vector<double> canvas(npix * 3);
  const double bg = rng.uniform(0.05, 0.3);
  for (auto& v : canvas) v = bg;

  RenderedImage out;
  std::vector<Footprint> placed;
  const auto count = rng.between(params.min_objects, params.max_objects);
  for (std::int64_t k = 0; k < count; ++k) {
    const auto& pool = (k == 0 && !first.empty()) ? first : allowed;
    const int label = pool[rng.below(pool.size())];
    const bool vertical = rng.uniform() < 0.5;
    Footprint fp{};
    bool ok = false;
    for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
      fp.size = static_cast<int>(rng.between(params.min_extent, params.max_extent));
      fp.x = static_cast<int>(rng.between(0, n - fp.size));
      fp.y = static_cast<int>(rng.between(0, n - fp.size));
      ok = std::none_of(placed.begin(), placed.end(),
                        [&](const Footprint& o) { return fp.overlaps(o, 1); });
    }
    if (!ok) continue;  // crowded canvas; keep what fits
    placed.push_back(fp);

    double color[3];
    for (auto& c : color) c = rng.uniform(0.55, 1.0);
    RenderedObject obj;
    obj.label = label;
    obj.mask.assign(npix, 0);
    obj.x0 = n;
    obj.y0 = n;
    obj.x1 = -1;
    obj.y1 = -1;
    const double half = 0.5 * fp.size;
    const double cx = fp.x + half, cy = fp.y + half;
    for (int y = fp.y; y < fp.y + fp.size; ++y) {
      for (int x = fp.x; x < fp.x + fp.size; ++x) {
        const double dx = (x + 0.5 - cx) / half;
        const double dy = (y + 0.5 - cy) / half;
        if (!inside_shape(label, dx, dy, vertical)) continue;
        const auto p = static_cast<std::size_t>(y) * n + x;
        obj.mask[p] = 1;
        for (int c = 0; c < 3; ++c) canvas[p * 3 + c] = color[c];
        obj.x0 = std::min(obj.x0, x);
        obj.y0 = std::min(obj.y0, y);
        obj.x1 = std::max(obj.x1, x);
        obj.y1 = std::max(obj.y1, y);
      }
    }
    if (obj.x1 < 0) continue;
    out.objects.push_back(std::move(obj));
  }

  out.raster.width = n;
  out.raster.height = n;
  out.raster.rgb.resize(npix * 3);
  for (std::size_t i = 0; i < canvas.size(); ++i) {
    const double noise = params.noise > 0 ? rng.normal(0.0, params.noise) : 0.0;
    out.raster.rgb[i] = quantize(canvas[i] + noise);
  }
  return out;
}

namespace {

std::string image_file(std::int64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06lld.ppm", static_cast<long long>(id));
  return buf;
}

AnnotationRecord annotation_of(std::int64_t id, const RenderedObject& o) {
  return {id, o.label, static_cast<double>(o.x0), static_cast<double>(o.y0),
          static_cast<double>(o.x1 - o.x0 + 1), static_cast<double>(o.y1 - o.y0 + 1)};
}

}  // namespace

GeneratedDataset generate_dataset(const TaskSplitConfig& cfg) {
  cfg.validate();
  GeneratedDataset ds;
  const auto all = cfg.classes_up_to(cfg.num_tasks() - 1);
  const int size = cfg.render.image_size;
  std::int64_t next_id = 1;

  for (std::size_t t = 0; t < cfg.num_tasks(); ++t) {
    const auto allowed = cfg.future_objects_in_train ? all : cfg.classes_up_to(t);
    const std::set<int> annotate(cfg.tasks[t].begin(), cfg.tasks[t].end());
    DatasetManifest m;
    for (int i = 0; i < cfg.images_per_task_train; ++i) {
      const std::int64_t id = next_id++;
      auto img = render_image(cfg.render, allowed,
                              Rng::derive(cfg.seed, static_cast<std::uint64_t>(id)),
                              cfg.tasks[t]);
      m.images.push_back({id, image_file(id), size, size});
      for (const auto& o : img.objects) {
        if (annotate.contains(o.label)) m.annotations.push_back(annotation_of(id, o));
      }
      ds.rasters.emplace(id, std::move(img.raster));
    }
    ds.train.push_back(std::move(m));
  }
  for (int i = 0; i < cfg.images_test; ++i) {
    const std::int64_t id = next_id++;
    auto img = render_image(cfg.render, all,
                            Rng::derive(cfg.seed, static_cast<std::uint64_t>(id)));
    ds.test.images.push_back({id, image_file(id), size, size});
    for (const auto& o : img.objects) ds.test.annotations.push_back(annotation_of(id, o));
    ds.rasters.emplace(id, std::move(img.raster));
  }
  return ds;
}

std::filesystem::path train_manifest_path(const std::filesystem::path& dir,
                                          std::size_t task_index) {
  return dir / ("train_task" + std::to_string(task_index + 1) + ".jsonl");
}

std::filesystem::path test_manifest_path(const std::filesystem::path& dir) {
  return dir / "test.jsonl";
}

void write_dataset(const GeneratedDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  for (std::size_t t = 0; t < ds.train.size(); ++t) {
    save_manifest(ds.train[t], train_manifest_path(dir, t));
  }
  save_manifest(ds.test, test_manifest_path(dir));
  for (const auto& [id, raster] : ds.rasters) write_ppm(raster, dir / image_file(id));
}

DatasetManifest project_to_task(const DatasetManifest& manifest,
                                const std::set<int>& known,
                                ProjectionMode mode) {
  DatasetManifest out;
  out.images = manifest.images;
  for (const auto& a : manifest.annotations) {
    if (known.contains(a.label)) {
      out.annotations.push_back(a);
    } else if (mode == ProjectionMode::kEval) {
      auto relabeled = a;
      relabeled.label = kUnknownLabel;
      out.annotations.push_back(relabeled);
    }
  }
  return out;
}

namespace {

template <typename RasterFor>
std::vector<LabeledImage> materialize_with(const DatasetManifest& manifest,
                                           RasterFor&& raster_for) {
  std::map<std::int64_t, std::size_t> slot;
  std::vector<LabeledImage> out;
  out.reserve(manifest.images.size());
  for (const auto& rec : manifest.images) {
    slot[rec.image_id] = out.size();
    LabeledImage img;
    img.image_id = rec.image_id;
    img.pixels = to_tensor(raster_for(rec));
    out.push_back(std::move(img));
  }
  for (const auto& a : manifest.annotations) {
    const auto it = slot.find(a.image_id);
    if (it == slot.end()) {
      throw ContractError("annotation references missing image_id " +
                          std::to_string(a.image_id));
    }
    const auto& rec = manifest.images[it->second];
    out[it->second].instances.push_back(
        {a.label, to_normalized(a, rec.width, rec.height)});
  }
  return out;
}

}  // namespace

std::vector<LabeledImage> materialize(const DatasetManifest& manifest,
                                      const std::map<std::int64_t, Raster>& rasters) {
  return materialize_with(manifest, [&](const ImageRecord& rec) -> const Raster& {
    const auto it = rasters.find(rec.image_id);
    if (it == rasters.end()) {
      throw ContractError("no raster for image " + std::to_string(rec.image_id));
    }
    return it->second;
  });
}

std::vector<LabeledImage> materialize(const DatasetManifest& manifest,
                                      const std::filesystem::path& base_dir) {
  return materialize_with(manifest, [&](const ImageRecord& rec) {
    return read_ppm(base_dir / rec.file);
  });
}

}  // namespace owdetr::data
