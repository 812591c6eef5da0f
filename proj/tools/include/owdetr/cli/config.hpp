#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "owdetr/data/synthetic.hpp"
#include "owdetr/metrics/metrics.hpp"
#include "owdetr/model/config.hpp"
#include "owdetr/protocol/episode.hpp"
#include "owdetr/protocol/inference.hpp"

namespace owdetr::cli {

// Everything one reproduction run needs. The seed drives data generation,
// initialization and training order.
struct RunConfig {
  model::ModelConfig model;
  data::TaskSplitConfig split = data::default_split();
  protocol::TrainConfig train;
  protocol::InferConfig infer;
  metrics::EvalOptions eval;
  std::size_t workers = 0;  // evaluation threads, 0 = hardware threads
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;

  RunConfig();
  // Throws ConfigError naming the key and its bound.
  void validate() const;
  // Propagates the seed into the split and the model.
  void apply_seed(std::uint64_t s);

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Reference-scale hyperparameters (D = 256, M = 100, 50 + 20 epochs,
// lr 2e-4).
RunConfig reference_preset();

// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::size_t> k_u;
  std::optional<std::size_t> top_k;
  bool no_nc = false;
  bool no_objectness = false;
  std::optional<std::filesystem::path> out;
};

// Empty text or "{}" yields the defaults. Unknown keys and bad values throw
// ConfigError.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

// Reads the file (if given), applies overrides, fills the output directory
// from OWDETR_OUT or "owdetr_out", validates.
RunConfig parse_config(const std::optional<std::filesystem::path>& path,
                       const Overrides& overrides = {});

}  // namespace owdetr::cli
