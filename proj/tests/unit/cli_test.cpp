#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "owdetr/cli/commands.hpp"
#include "owdetr/cli/config.hpp"
#include "owdetr/cli/pipeline.hpp"
#include "owdetr/cli/report.hpp"
#include "owdetr/errors.hpp"

namespace fs = std::filesystem;
namespace oc = owdetr::cli;

namespace {

const char* kTinyConfig = R"({
  "model": {"d_model": 8, "num_queries": 6, "num_points": 2, "enc_layers": 1, "dec_layers": 1,
            "ffn_dim": 16, "backbone_width": 4},
  "data": {"images_per_task_train": 3, "images_test": 3,
           "render": {"image_size": 32, "min_extent": 8, "max_extent": 14, "max_objects": 3}},
  "train": {"epochs": 1, "finetune_epochs": 1, "exemplar_cap": 2}
})";

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("owdetr_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

oc::RunConfig tiny(const fs::path& out) {
  auto cfg = oc::config_from_json(kTinyConfig);
  cfg.output_dir = out;
  cfg.workers = 1;
  cfg.validate();
  return cfg;
}

int run(const std::string& cmd, const oc::RunConfig& cfg, oc::CommandOptions opts = {},
        std::string* err_text = nullptr) {
  std::ostringstream log, err;
  const int code = oc::run_command(cmd, cfg, opts, log, err);
  if (err_text) *err_text = err.str();
  return code;
}

void run_all(const oc::RunConfig& cfg) {
  ASSERT_EQ(run("gen-data", cfg), oc::kExitOk);
  ASSERT_EQ(run("train", cfg), oc::kExitOk);
  oc::CommandOptions all;
  all.all = true;
  ASSERT_EQ(run("incremental", cfg, all), oc::kExitOk);
  for (std::size_t t = 1; t <= 4; ++t) {
    oc::CommandOptions o;
    o.task = t;
    ASSERT_EQ(run("eval", cfg, o), oc::kExitOk) << "task " << t;
  }
  ASSERT_EQ(run("report", cfg), oc::kExitOk);
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const auto a = oc::config_from_json("");
  const auto b = oc::config_from_json("{}");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, oc::RunConfig{});
  EXPECT_EQ(a.train.loss.alpha, 0.1);
  EXPECT_EQ(a.train.loss.k_u, 5u);
  EXPECT_EQ(a.infer.top_k, 50u);
  EXPECT_TRUE(a.train.loss.novelty);
  EXPECT_TRUE(a.train.loss.objectness);
}

TEST(Config, RoundTrip) {
  for (auto cfg : {oc::RunConfig{}, oc::reference_preset(), oc::config_from_json(kTinyConfig)}) {
    cfg.output_dir = "some/dir";
    const auto text = oc::config_to_json(cfg);
    const auto back = oc::config_from_json(text);
    EXPECT_EQ(back, cfg);
    EXPECT_EQ(oc::config_to_json(back), text);
  }
  const auto family = oc::config_from_json(R"({"data": {"split": "family"}})");
  EXPECT_EQ(family.split.tasks, owdetr::data::family_split().tasks);
  EXPECT_EQ(oc::config_from_json(oc::config_to_json(family)), family);
}

TEST(Config, ErrorsNameTheKey) {
  auto expect_key = [](const std::string& text, const std::string& key) {
    try {
      oc::config_from_json(text).validate();
      ADD_FAILURE() << "no error for " << text;
    } catch (const owdetr::ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
    }
  };
  expect_key(R"({"bogus": 1})", "bogus");
  expect_key(R"({"loss": {"alpah": 0.2}})", "loss.alpah");
  expect_key(R"({"loss": {"alpha": -1}})", "loss.alpha");
  expect_key(R"({"inference": {"top_k": 0}})", "inference.top_k");
  expect_key(R"({"train": {"epochs": "many"}})", "train.epochs");
  expect_key(R"({"data": {"split": [[1, 2], [2, 3]]}})", "data.split");
  EXPECT_THROW((void)oc::config_from_json("{"), owdetr::ConfigError);
}

TEST(Config, FlagsOverrideFileOverrideEnvironment) {
  const auto dir = fresh_dir("precedence");
  {
    std::ofstream f(dir / "cfg.json");
    f << R"({"loss": {"alpha": 0.1, "k_u": 3}, "output_dir": "from_file"})";
  }
  ::setenv("OWDETR_OUT", "from_env", 1);
  oc::Overrides o;
  o.alpha = 0.2;
  auto cfg = oc::parse_config(dir / "cfg.json", o);
  EXPECT_EQ(cfg.train.loss.alpha, 0.2);
  EXPECT_EQ(cfg.train.loss.k_u, 3u);
  EXPECT_EQ(cfg.output_dir, "from_file");
  o.out = "from_flag";
  o.no_nc = true;
  o.top_k = 7;
  cfg = oc::parse_config(dir / "cfg.json", o);
  EXPECT_EQ(cfg.output_dir, "from_flag");
  EXPECT_FALSE(cfg.train.loss.novelty);
  EXPECT_TRUE(cfg.train.loss.objectness);
  EXPECT_EQ(cfg.infer.top_k, 7u);
  EXPECT_EQ(oc::parse_config(std::nullopt).output_dir, "from_env");
  ::unsetenv("OWDETR_OUT");
  EXPECT_EQ(oc::parse_config(std::nullopt).output_dir, "owdetr_out");
  EXPECT_THROW((void)oc::parse_config(dir / "missing.json"), owdetr::Error);
}

TEST(Commands, MissingPrerequisitesNameTheArtifact) {
  const auto cfg = tiny(fresh_dir("missing"));
  std::string err;
  EXPECT_EQ(run("train", cfg, {}, &err), oc::kExitMissing);
  EXPECT_NE(err.find("dataset.json"), std::string::npos) << err;
  ASSERT_EQ(run("gen-data", cfg), oc::kExitOk);
  oc::CommandOptions o;
  o.task = 1;
  EXPECT_EQ(run("eval", cfg, o, &err), oc::kExitMissing);
  EXPECT_NE(err.find(oc::checkpoint_path(cfg, 1, "final").string()), std::string::npos) << err;
  EXPECT_EQ(run("incremental", cfg, {}, &err), oc::kExitMissing);
  EXPECT_EQ(run("nonsense", cfg), oc::kExitUsage);
}

TEST(Commands, DataStampGuardsSplitChanges) {
  auto cfg = tiny(fresh_dir("stamp"));
  ASSERT_EQ(run("gen-data", cfg), oc::kExitOk);
  cfg.split.images_test = 4;
  std::string err;
  EXPECT_NE(run("train", cfg, {}, &err), oc::kExitOk);
  EXPECT_NE(err.find("gen-data"), std::string::npos) << err;
}

TEST(Commands, FullRunIsDeterministicAndReportDropsFinalURecall) {
  const auto a = tiny(fresh_dir("run_a"));
  const auto b = tiny(fresh_dir("run_b"));
  run_all(a);
  run_all(b);
  for (std::size_t t = 1; t <= 4; ++t) {
    EXPECT_EQ(slurp(oc::checkpoint_path(a, t, "final")), slurp(oc::checkpoint_path(b, t, "final")));
    EXPECT_EQ(slurp(oc::task_dir(a, t) / "eval.json"), slurp(oc::task_dir(b, t) / "eval.json"));
    EXPECT_EQ(slurp(oc::task_dir(a, t) / "detections.jsonl"),
              slurp(oc::task_dir(b, t) / "detections.jsonl"));
  }
  EXPECT_EQ(slurp(a.output_dir / "report.md"), slurp(b.output_dir / "report.md"));
  EXPECT_TRUE(fs::exists(a.output_dir / "plots" / "loss.svg"));
  EXPECT_TRUE(fs::exists(a.output_dir / "plots" / "u_recall.svg"));
  EXPECT_TRUE(fs::exists(oc::checkpoint_path(a, 2, "train")));

  const auto last = owdetr::metrics::report_from_json(slurp(oc::task_dir(a, 4) / "eval.json"));
  EXPECT_FALSE(last.u_recall.has_value());
  const auto md = slurp(a.output_dir / "report.md");
  const auto row = md.substr(md.find("| 4 |"));
  EXPECT_EQ(row.substr(0, row.find('\n')).find("| 4 | - |"), 0u) << row;

  oc::CommandOptions again;
  again.task = 4;
  ASSERT_EQ(run("eval", a, again), oc::kExitOk);
  EXPECT_EQ(slurp(oc::task_dir(a, 4) / "eval.json"), slurp(oc::task_dir(b, 4) / "eval.json"));
}

TEST(Commands, AblationRowsInFixedOrder) {
  auto cfg = tiny(fresh_dir("ablate"));
  cfg.split.images_test = 2;
  ASSERT_EQ(run("ablate", cfg), oc::kExitOk);
  const auto md = slurp(cfg.output_dir / "ablation" / "ablation.md");
  const auto base = md.find("| Baseline |"), nc = md.find("| +NC |"), full = md.find("| full |");
  ASSERT_NE(base, std::string::npos);
  ASSERT_NE(nc, std::string::npos);
  ASSERT_NE(full, std::string::npos);
  EXPECT_LT(base, nc);
  EXPECT_LT(nc, full);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "ablation" / "plots" / "u_recall.svg"));
}

TEST(Commands, MainEntryUsageErrors) {
  const char* bad_flag[] = {"owdetr", "eval", "--no-such-flag"};
  EXPECT_EQ(oc::main_entry(3, const_cast<char**>(bad_flag)), oc::kExitUsage);
  const char* bad_value[] = {"owdetr", "train", "--alpha", "-1", "--out", "/tmp/owdetr_cli_unused"};
  EXPECT_EQ(oc::main_entry(6, const_cast<char**>(bad_value)), oc::kExitUsage);
}

TEST(Pipeline, VariantsAndMedian) {
  EXPECT_EQ(oc::variant_name(oc::Variant::kBaseline), "Baseline");
  EXPECT_EQ(oc::variant_name(oc::Variant::kNovelty), "+NC");
  EXPECT_EQ(oc::variant_name(oc::Variant::kFull), "full");
  const auto base = oc::with_variant(oc::RunConfig{}, oc::Variant::kBaseline);
  EXPECT_FALSE(base.train.loss.novelty);
  EXPECT_FALSE(base.train.loss.objectness);
  EXPECT_FALSE(base.infer.novelty);
  const auto nc = oc::with_variant(oc::RunConfig{}, oc::Variant::kNovelty);
  EXPECT_TRUE(nc.train.loss.novelty);
  EXPECT_FALSE(nc.train.loss.objectness);
  EXPECT_EQ(oc::median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(oc::median({4.0, 1.0}), 2.5);
}

TEST(Report, EpochLogRoundTrip) {
  owdetr::protocol::EpochLog log;
  log.task = 2;
  log.epoch = 3;
  log.phase = "finetune";
  log.total = 1.25;
  std::stringstream ss(oc::epoch_log_line(log) + "\n" + oc::epoch_log_line(log) + "\n");
  const auto back = oc::read_epoch_logs(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].task, 2u);
  EXPECT_EQ(back[0].epoch, 3u);
  EXPECT_EQ(back[0].phase, "finetune");
  EXPECT_EQ(back[0].total, 1.25);
}

TEST(Config, ShippedConfigsParse) {
  const fs::path dir = fs::path(OWDETR_SOURCE_DIR) / "configs";
  auto desk = oc::parse_config(dir / "owod_split.json");
  desk.output_dir.clear();
  oc::RunConfig defaults;
  EXPECT_EQ(desk, defaults);
  const auto strict = oc::parse_config(dir / "strict_split.json");
  EXPECT_EQ(strict.split.tasks, owdetr::data::family_split().tasks);
  EXPECT_NE(strict.split.tasks, desk.split.tasks);
  auto reference = oc::parse_config(dir / "reference_scale.json");
  reference.output_dir.clear();
  EXPECT_EQ(reference, oc::reference_preset());
}
