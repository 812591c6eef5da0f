#include "owdetr/cli/commands.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "owdetr/cli/pipeline.hpp"
#include "owdetr/cli/report.hpp"
#include "owdetr/errors.hpp"
#include "owdetr/protocol/checkpoint.hpp"

namespace owdetr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class MissingArtifact : public Error {
 public:
  using Error::Error;
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("short write to " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  std::stringstream back;
  back << in.rdbuf();
  if (back.str() != text) throw IoError("verification of " + path.string() + " failed");
}

std::string read_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("missing " + what + ": " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json split_json(const data::TaskSplitConfig& s) {
  return {{"tasks", s.tasks},
          {"images_per_task_train", s.images_per_task_train},
          {"images_test", s.images_test},
          {"future_objects_in_train", s.future_objects_in_train},
          {"seed", s.seed},
          {"render",
           {s.render.image_size, s.render.noise, s.render.min_objects, s.render.max_objects,
            s.render.min_extent, s.render.max_extent}}};
}

DatasetView load_dataset(const RunConfig& cfg) {
  const fs::path dir = data_dir(cfg);
  const auto stamp = read_file(dir / "dataset.json", "dataset (run gen-data first)");
  if (json::parse(stamp) != split_json(cfg.split)) {
    throw ConfigError("dataset in " + dir.string() +
                      " was generated from a different split or seed; rerun gen-data");
  }
  return DatasetView::load(dir, cfg.split);
}

void save_checkpoint(const protocol::EpisodeState& state, const fs::path& path) {
  protocol::checkpoint_save(state, path);
  (void)protocol::checkpoint_load(path);  // validates the written file
}

protocol::EpisodeState load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact("missing checkpoint: " + path.string());
  return protocol::checkpoint_load(path);
}

std::size_t latest_task(const RunConfig& cfg) {
  std::size_t latest = 0;
  for (std::size_t t = 1; t <= cfg.split.num_tasks(); ++t) {
    if (fs::exists(checkpoint_path(cfg, t))) latest = t;
  }
  return latest;
}

RunConfig with_divergence_path(RunConfig cfg, std::size_t task) {
  cfg.train.divergence_checkpoint = task_dir(cfg, task) / "last_good.ckpt";
  return cfg;
}

Hooks logging_hooks(std::ostream& log, std::string& lines) {
  Hooks h;
  h.on_epoch = [&log, &lines](const protocol::EpochLog& l) {
    lines += epoch_log_line(l) + "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "task %zu %-8s epoch %3zu  L_n %.4f  L_r %.4f  L_o %.4f  L %.4f\n",
                  l.task, l.phase.c_str(), l.epoch, l.l_n, l.l_r, l.l_o, l.total);
    log << buf << std::flush;
  };
  return h;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const auto ds = data::generate_dataset(cfg.split);
  const fs::path dir = data_dir(cfg);
  data::write_dataset(ds, dir);
  write_file(dir / "dataset.json", split_json(cfg.split).dump(2) + "\n");
  (void)DatasetView::load(dir, cfg.split);
  log << "wrote " << ds.train.size() << " training manifests and a test manifest ("
      << ds.rasters.size() << " images) to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto ds = load_dataset(cfg);
  std::string lines;
  TaskResult result;
  auto hooks = logging_hooks(log, lines);
  const auto state = train_first_task(with_divergence_path(cfg, 1), ds, result, hooks);
  write_file(task_dir(cfg, 1) / "train_log.jsonl", lines);
  save_checkpoint(state, checkpoint_path(cfg, 1));
  log << "task 1 checkpoint: " << checkpoint_path(cfg, 1).string() << "\n";
  return kExitOk;
}

int cmd_incremental(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  const auto ds = load_dataset(cfg);
  std::size_t next = opt.task.value_or(latest_task(cfg) + 1);
  if (next < 2) {
    throw MissingArtifact("missing task 1 checkpoint: " + checkpoint_path(cfg, 1).string() +
                          " (run train first)");
  }
  if (next > cfg.split.num_tasks()) {
    throw ContractError("the split has only " + std::to_string(cfg.split.num_tasks()) + " tasks");
  }
  do {
    auto state = load_checkpoint(checkpoint_path(cfg, next - 1));
    if (state.labels.task() != next - 1) {
      throw ContractError("checkpoint " + checkpoint_path(cfg, next - 1).string() +
                          " holds task " + std::to_string(state.labels.task()));
    }
    std::string lines;
    auto hooks = logging_hooks(log, lines);
    hooks.on_state = [&](std::size_t t, const std::string& stage, const protocol::EpisodeState& s) {
      if (stage == "train") save_checkpoint(s, checkpoint_path(cfg, t, "train"));
    };
    TaskResult result;
    train_next_task(state, with_divergence_path(cfg, next), ds, result, false, hooks);
    write_file(task_dir(cfg, next) / "train_log.jsonl", lines);
    save_checkpoint(state, checkpoint_path(cfg, next));
    log << "task " << next << " checkpoint: " << checkpoint_path(cfg, next).string()
        << " (classifier width " << result.classifier_width << ")\n";
    ++next;
  } while (opt.all && next <= cfg.split.num_tasks());
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  if (opt.stage != "final" && opt.stage != "train") {
    throw ConfigError("--stage must be \"final\" or \"train\"");
  }
  const std::size_t task = opt.task.value_or(latest_task(cfg));
  if (task == 0) {
    throw MissingArtifact("missing checkpoint: " + checkpoint_path(cfg, 1).string() +
                          " (run train first)");
  }
  const fs::path ckpt = checkpoint_path(cfg, task, task == 1 ? "final" : opt.stage);
  const auto state = load_checkpoint(ckpt);
  const auto ds = load_dataset(cfg);
  std::vector<protocol::DetectionSet> dets;
  const auto report = evaluate_state(state, cfg, ds, &dets);
  const std::string suffix = opt.stage == "train" ? "_train" : "";
  const fs::path dir = task_dir(cfg, task);
  const std::string js = metrics::report_to_json(report);
  write_file(dir / ("eval" + suffix + ".json"), js);
  if (!(metrics::report_from_json(js) == report)) throw IoError("eval report failed to round-trip");
  write_file(dir / ("eval" + suffix + ".txt"), metrics::report_to_text(report));
  std::ostringstream dump;
  metrics::write_detections(dets, dump);
  write_file(dir / ("detections" + suffix + ".jsonl"), dump.str());
  log << metrics::report_to_text(report);
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& log) {
  std::vector<metrics::EvalReport> reports;
  std::vector<protocol::EpochLog> logs;
  for (std::size_t t = 1; t <= cfg.split.num_tasks(); ++t) {
    const fs::path eval = task_dir(cfg, t) / "eval.json";
    if (!fs::exists(eval)) continue;
    reports.push_back(metrics::report_from_json(read_file(eval, "eval report")));
    const fs::path log_path = task_dir(cfg, t) / "train_log.jsonl";
    if (fs::exists(log_path)) {
      std::istringstream in(read_file(log_path, "training log"));
      const auto entries = read_epoch_logs(in);
      logs.insert(logs.end(), entries.begin(), entries.end());
    }
  }
  if (reports.empty()) {
    throw MissingArtifact("missing eval reports: " + (task_dir(cfg, 1) / "eval.json").string() +
                          " (run eval first)");
  }
  const std::string table = task_table_markdown(reports);
  write_file(cfg.output_dir / "report.md", "# Open-world evaluation\n\n" + table);
  write_file(cfg.output_dir / "report.json", task_table_json(reports));
  write_file(cfg.output_dir / "plots" / "loss.svg", loss_curve_svg(logs));
  std::vector<std::string> labels;
  std::vector<double> values;
  for (const auto& r : reports) {
    if (!r.u_recall) continue;
    labels.push_back("T" + std::to_string(r.task));
    values.push_back(100.0 * *r.u_recall);
  }
  write_file(cfg.output_dir / "plots" / "u_recall.svg",
             bar_chart_svg("U-Recall per task", labels, values));
  log << table;
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const CommandOptions& opt, std::ostream& log) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < std::max<std::size_t>(opt.seeds, 1); ++i) seeds.push_back(cfg.seed + i);
  const auto runs = run_ablation(cfg, seeds, [&](const AblationRun& r) {
    log << variant_name(r.variant) << " seed " << r.seed << ": mean U-Recall "
        << 100.0 * mean_unknown_recall(r.tasks) << "\n"
        << std::flush;
  });
  const fs::path dir = cfg.output_dir / "ablation";
  const std::string table = ablation_table_markdown(runs);
  write_file(dir / "ablation.md", "# Ablation: Baseline / +NC / full\n\n" + table);
  write_file(dir / "ablation.json", ablation_json(runs));
  std::vector<std::string> labels;
  std::vector<double> values;
  for (Variant v : kVariants) {
    std::vector<double> means;
    for (const auto& r : runs) {
      if (r.variant == v) means.push_back(mean_unknown_recall(r.tasks));
    }
    labels.push_back(variant_name(v));
    values.push_back(100.0 * median(means));
  }
  write_file(dir / "plots" / "u_recall.svg", bar_chart_svg("mean U-Recall", labels, values));
  log << table;
  return kExitOk;
}

}  // namespace

fs::path data_dir(const RunConfig& cfg) { return cfg.output_dir / "data"; }

fs::path task_dir(const RunConfig& cfg, std::size_t task) {
  return cfg.output_dir / ("task" + std::to_string(task));
}

fs::path checkpoint_path(const RunConfig& cfg, std::size_t task, const std::string& stage) {
  return task_dir(cfg, task) / (stage == "train" ? "checkpoint_train.bin" : "checkpoint.bin");
}

int run_command(const std::string& command, const RunConfig& cfg, const CommandOptions& options,
                std::ostream& log, std::ostream& err) {
  try {
    write_file(cfg.output_dir / "config.json", config_to_json(cfg));
    if (command == "gen-data") return cmd_gen_data(cfg, log);
    if (command == "train") return cmd_train(cfg, log);
    if (command == "incremental") return cmd_incremental(cfg, options, log);
    if (command == "eval") return cmd_eval(cfg, options, log);
    if (command == "report") return cmd_report(cfg, log);
    if (command == "ablate") return cmd_ablate(cfg, options, log);
    err << "unknown command '" << command << "'\n";
    return kExitUsage;
  } catch (const MissingArtifact& e) {
    err << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Open-world detection transformer at desk scale"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  Overrides ov;
  CommandOptions opt;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> k_u, top_k, task;
  std::optional<std::string> out;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--alpha", alpha, "objectness loss weight");
    sub->add_option("--k-u", k_u, "pseudo-unknowns per image");
    sub->add_option("--top-k", top_k, "detections kept per image");
    sub->add_flag("--no-nc", ov.no_nc, "disable novelty classification");
    sub->add_flag("--no-objectness", ov.no_objectness, "disable the objectness branch");
    sub->add_option("--out", out, "output directory (default: $OWDETR_OUT or ./owdetr_out)");
  };
  common(app.add_subcommand("gen-data", "render the synthetic task split"));
  common(app.add_subcommand("train", "train the first task"));
  common(app.add_subcommand("report", "tabulate evaluations and plot losses"));
  auto* inc = app.add_subcommand("incremental", "add the next task");
  common(inc);
  inc->add_option("--task", task, "task to train (default: the next one)");
  inc->add_flag("--all", opt.all, "train every remaining task");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  common(ev);
  ev->add_option("--task", task, "task checkpoint to evaluate (default: latest)");
  ev->add_option("--stage", opt.stage, "final or train (before finetuning)");
  auto* ab = app.add_subcommand("ablate", "run Baseline / +NC / full");
  common(ab);
  ab->add_option("--seeds", opt.seeds, "number of consecutive seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }
  ov.seed = seed;
  ov.alpha = alpha;
  ov.k_u = k_u;
  ov.top_k = top_k;
  if (out) ov.out = fs::path(*out);
  opt.task = task;

  RunConfig cfg;
  try {
    cfg = parse_config(config_path ? std::optional<fs::path>(*config_path) : std::nullopt, ov);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return run_command(app.get_subcommands().front()->get_name(), cfg, opt, std::cout, std::cerr);
}

}  // namespace owdetr::cli
