#include "owdetr/cli/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "owdetr/errors.hpp"

namespace owdetr::cli {
namespace {

using nlohmann::json;

// Walks one JSON object, remembering which keys were read so leftovers can be
// reported.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(name() + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("unknown config key '" + key(k) + "'");
    }
  }

  template <typename T>
  void read(const std::string& k, T& out) {
    seen_.insert(k);
    if (!j_.contains(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + key(k) + "' has the wrong type");
    }
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  Section child(const std::string& k) {
    seen_.insert(k);
    return Section(j_.at(k), key(k));
  }
  const json& raw(const std::string& k) {
    seen_.insert(k);
    return j_.at(k);
  }
  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

 private:
  std::string name() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& bound) {
  if (!ok) throw ConfigError("config key '" + key + "' must be " + bound);
}

std::string window_name(openworld::WindowRule r) {
  return r == openworld::WindowRule::kCellCenter ? "center" : "area";
}

std::string aose_name(metrics::AoseCounting c) {
  return c == metrics::AoseCounting::kInstances ? "instances" : "detections";
}

void apply(Section& root, RunConfig& c) {
  if (root.has("preset")) {
    std::string preset;
    root.read("preset", preset);
    if (preset == "reference") {
      c = reference_preset();
    } else if (preset != "desk") {
      throw ConfigError("config key 'preset' must be \"desk\" or \"reference\"");
    }
  }
  if (root.has("seed")) {
    std::uint64_t seed = 0;
    root.read("seed", seed);
    c.apply_seed(seed);
  }
  std::string out;
  root.read("output_dir", out);
  if (!out.empty()) c.output_dir = out;
  root.read("workers", c.workers);

  if (root.has("model")) {
    Section m = root.child("model");
    m.read("d_model", c.model.d_model);
    m.read("num_queries", c.model.num_queries);
    m.read("num_levels", c.model.num_levels);
    m.read("num_points", c.model.num_points);
    m.read("num_heads", c.model.num_heads);
    m.read("enc_layers", c.model.enc_layers);
    m.read("dec_layers", c.model.dec_layers);
    m.read("ffn_dim", c.model.ffn_dim);
    m.read("backbone_width", c.model.backbone_width);
    m.read("attention_stage", c.model.attention_stage);
  }
  if (root.has("data")) {
    Section d = root.child("data");
    if (d.has("split")) {
      const json& s = d.raw("split");
      if (s.is_string()) {
        const auto name = s.get<std::string>();
        if (name == "default") {
          c.split.tasks = data::default_split().tasks;
        } else if (name == "family") {
          c.split.tasks = data::family_split().tasks;
        } else {
          throw ConfigError("config key 'data.split' must be \"default\", \"family\" or a "
                            "list of class lists");
        }
      } else {
        try {
          c.split.tasks = s.get<std::vector<std::vector<int>>>();
        } catch (const json::exception&) {
          throw ConfigError("config key 'data.split' must be a list of class lists");
        }
      }
    }
    d.read("images_per_task_train", c.split.images_per_task_train);
    d.read("images_test", c.split.images_test);
    d.read("future_objects_in_train", c.split.future_objects_in_train);
    if (d.has("render")) {
      Section r = d.child("render");
      r.read("image_size", c.split.render.image_size);
      r.read("noise", c.split.render.noise);
      r.read("min_objects", c.split.render.min_objects);
      r.read("max_objects", c.split.render.max_objects);
      r.read("min_extent", c.split.render.min_extent);
      r.read("max_extent", c.split.render.max_extent);
    }
  }
  if (root.has("train")) {
    Section t = root.child("train");
    t.read("epochs", c.train.epochs);
    t.read("finetune_epochs", c.train.finetune_epochs);
    t.read("lr", c.train.adam.lr);
    t.read("finetune_lr_factor", c.train.finetune_lr_factor);
    t.read("beta1", c.train.adam.beta1);
    t.read("beta2", c.train.adam.beta2);
    t.read("eps", c.train.adam.eps);
    t.read("weight_decay", c.train.adam.weight_decay);
    t.read("clip_norm", c.train.adam.clip_norm);
    t.read("accumulate", c.train.accumulate);
    t.read("exemplar_cap", c.train.exemplar_cap);
  }
  if (root.has("loss")) {
    Section l = root.child("loss");
    auto& loss = c.train.loss;
    l.read("alpha", loss.alpha);
    l.read("k_u", loss.k_u);
    l.read("gamma", loss.gamma);
    l.read("alpha_bal", loss.alpha_bal);
    l.read("cost_class", loss.cost.cls);
    l.read("cost_l1", loss.cost.l1);
    l.read("cost_giou", loss.cost.giou);
    l.read("l1_weight", loss.l1_weight);
    l.read("giou_weight", loss.giou_weight);
    if (l.has("window")) {
      std::string w;
      l.read("window", w);
      if (w == "center") {
        loss.window = openworld::WindowRule::kCellCenter;
      } else if (w == "area") {
        loss.window = openworld::WindowRule::kFractionalArea;
      } else {
        throw ConfigError("config key 'loss.window' must be \"center\" or \"area\"");
      }
    }
  }
  if (root.has("switches")) {
    Section s = root.child("switches");
    s.read("novelty", c.train.loss.novelty);
    s.read("objectness", c.train.loss.objectness);
  }
  if (root.has("inference")) {
    Section i = root.child("inference");
    i.read("top_k", c.infer.top_k);
    i.read("score_fusion", c.infer.score_fusion);
  }
  if (root.has("eval")) {
    Section e = root.child("eval");
    e.read("iou", c.eval.iou_thresh);
    e.read("wi_recall", c.eval.wi_recall);
    if (e.has("aose_counting")) {
      std::string a;
      e.read("aose_counting", a);
      if (a == "instances") {
        c.eval.aose_counting = metrics::AoseCounting::kInstances;
      } else if (a == "detections") {
        c.eval.aose_counting = metrics::AoseCounting::kDetections;
      } else {
        throw ConfigError(
            "config key 'eval.aose_counting' must be \"instances\" or \"detections\"");
      }
    }
  }
  c.infer.novelty = c.train.loss.novelty;
}

}  // namespace

RunConfig::RunConfig() {
  // Desk-scale training: a higher step size and DETR-style gradient clipping
  // make the short schedule converge.
  train.adam.lr = 1e-3;
  train.adam.clip_norm = 0.1;
  apply_seed(0);
}

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  split.seed = s;
  model.seed = s;
}

RunConfig reference_preset() {
  RunConfig c;
  c.model = model::reference_model_config();
  c.model.seed = c.seed;
  c.train.epochs = 50;
  c.train.finetune_epochs = 20;
  c.train.adam.lr = 2e-4;
  c.train.adam.clip_norm = 0.1;
  return c;
}

void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  try {
    split.validate();
  } catch (const Error& e) {
    std::string msg = e.what();
    if (msg.rfind("tasks", 0) == 0) msg = "split" + msg.substr(5);
    throw ConfigError("data." + msg);
  }
  const auto& l = train.loss;
  require(l.alpha >= 0.0, "loss.alpha", ">= 0");
  require(l.gamma >= 0.0, "loss.gamma", ">= 0");
  require(l.alpha_bal >= 0.0 && l.alpha_bal <= 1.0, "loss.alpha_bal", "in [0, 1]");
  require(l.cost.cls >= 0.0 && l.cost.l1 >= 0.0 && l.cost.giou >= 0.0, "loss.cost_*", ">= 0");
  require(l.l1_weight >= 0.0 && l.giou_weight >= 0.0, "loss.l1_weight/giou_weight", ">= 0");
  require(infer.top_k >= 1, "inference.top_k", ">= 1");
  require(train.adam.lr > 0.0, "train.lr", "> 0");
  require(train.finetune_lr_factor > 0.0, "train.finetune_lr_factor", "> 0");
  require(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0, "train.beta1", "in [0, 1)");
  require(train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0, "train.beta2", "in [0, 1)");
  require(train.adam.eps > 0.0, "train.eps", "> 0");
  require(train.adam.weight_decay >= 0.0, "train.weight_decay", ">= 0");
  require(train.adam.clip_norm >= 0.0, "train.clip_norm", ">= 0");
  require(train.accumulate >= 1, "train.accumulate", ">= 1");
  require(train.exemplar_cap >= 1, "train.exemplar_cap", ">= 1");
  require(eval.iou_thresh > 0.0 && eval.iou_thresh <= 1.0, "eval.iou", "in (0, 1]");
  require(eval.wi_recall > 0.0 && eval.wi_recall <= 1.0, "eval.wi_recall", "in (0, 1]");
  require(split.render.image_size >= 16, "data.render.image_size", ">= 16");
}

RunConfig config_from_json(const std::string& text) {
  RunConfig c;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section root(j, "");
  apply(root, c);
  return c;
}

std::string config_to_json(const RunConfig& c) {
  const auto& l = c.train.loss;
  const auto& r = c.split.render;
  const json j = {
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"workers", c.workers},
      {"model",
       {{"d_model", c.model.d_model},
        {"num_queries", c.model.num_queries},
        {"num_levels", c.model.num_levels},
        {"num_points", c.model.num_points},
        {"num_heads", c.model.num_heads},
        {"enc_layers", c.model.enc_layers},
        {"dec_layers", c.model.dec_layers},
        {"ffn_dim", c.model.ffn_dim},
        {"backbone_width", c.model.backbone_width},
        {"attention_stage", c.model.attention_stage}}},
      {"data",
       {{"split", c.split.tasks},
        {"images_per_task_train", c.split.images_per_task_train},
        {"images_test", c.split.images_test},
        {"future_objects_in_train", c.split.future_objects_in_train},
        {"render",
         {{"image_size", r.image_size},
          {"noise", r.noise},
          {"min_objects", r.min_objects},
          {"max_objects", r.max_objects},
          {"min_extent", r.min_extent},
          {"max_extent", r.max_extent}}}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"finetune_epochs", c.train.finetune_epochs},
        {"lr", c.train.adam.lr},
        {"finetune_lr_factor", c.train.finetune_lr_factor},
        {"beta1", c.train.adam.beta1},
        {"beta2", c.train.adam.beta2},
        {"eps", c.train.adam.eps},
        {"weight_decay", c.train.adam.weight_decay},
        {"clip_norm", c.train.adam.clip_norm},
        {"accumulate", c.train.accumulate},
        {"exemplar_cap", c.train.exemplar_cap}}},
      {"loss",
       {{"alpha", l.alpha},
        {"k_u", l.k_u},
        {"gamma", l.gamma},
        {"alpha_bal", l.alpha_bal},
        {"cost_class", l.cost.cls},
        {"cost_l1", l.cost.l1},
        {"cost_giou", l.cost.giou},
        {"l1_weight", l.l1_weight},
        {"giou_weight", l.giou_weight},
        {"window", window_name(l.window)}}},
      {"switches", {{"novelty", l.novelty}, {"objectness", l.objectness}}},
      {"inference", {{"top_k", c.infer.top_k}, {"score_fusion", c.infer.score_fusion}}},
      {"eval",
       {{"iou", c.eval.iou_thresh},
        {"wi_recall", c.eval.wi_recall},
        {"aose_counting", aose_name(c.eval.aose_counting)}}},
  };
  return j.dump(2) + "\n";
}

RunConfig parse_config(const std::optional<std::filesystem::path>& path,
                       const Overrides& o) {
  RunConfig c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot read config file " + path->string());
    std::stringstream buf;
    buf << in.rdbuf();
    c = config_from_json(buf.str());
  }
  if (o.seed) c.apply_seed(*o.seed);
  if (o.alpha) c.train.loss.alpha = *o.alpha;
  if (o.k_u) c.train.loss.k_u = *o.k_u;
  if (o.top_k) c.infer.top_k = *o.top_k;
  if (o.no_nc) c.train.loss.novelty = false;
  if (o.no_objectness) c.train.loss.objectness = false;
  c.infer.novelty = c.train.loss.novelty;
  if (o.out) {
    c.output_dir = *o.out;
  } else if (c.output_dir.empty()) {
    const char* env = std::getenv("OWDETR_OUT");
    c.output_dir = (env != nullptr && *env != '\0') ? env : "owdetr_out";
  }
  c.validate();
  return c;
}

}  // namespace owdetr::cli
