#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "owdetr/data/types.hpp"
#include "owdetr/model/network.hpp"
#include "owdetr/numerics/random.hpp"
#include "owdetr/openworld/criterion.hpp"
#include "owdetr/protocol/label_space.hpp"
#include "owdetr/protocol/optimizer.hpp"

namespace owdetr::protocol {

using data::LabeledImage;
using numerics::Tensor;

struct ExemplarItem {
  std::int64_t image_id = 0;
  std::vector<data::Instance> instances;  // only the owning class

  friend bool operator==(const ExemplarItem&, const ExemplarItem&) = default;
};

struct ExemplarStore {
  std::map<int, std::vector<ExemplarItem>> by_class;

  std::size_t size() const;
  bool empty() const { return size() == 0; }
  friend bool operator==(const ExemplarStore&, const ExemplarStore&) = default;
};

struct Counters {
  std::uint64_t epochs = 0;
  std::uint64_t steps = 0;

  friend bool operator==(const Counters&, const Counters&) = default;
};

struct EpisodeState {
  model::Network network;
  LabelSpace labels;
  ExemplarStore exemplars;
  Adam optimizer;
  numerics::Rng rng;
  Counters counters;

  // Task-1 state: classifier sized for `first_task`, rng seeded from `seed`.
  static EpisodeState initial(const model::ModelConfig& cfg,
                              const std::vector<int>& first_task, std::uint64_t seed);
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t finetune_epochs = 5;
  double finetune_lr_factor = 0.1;
  std::size_t accumulate = 1;  // images per optimizer step
  std::size_t exemplar_cap = 50;
  AdamConfig adam;
  openworld::LossConfig loss;
  // Written with the last good state when training diverges; empty skips it.
  std::filesystem::path divergence_checkpoint;

  double finetune_lr() const { return adam.lr * finetune_lr_factor; }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochLog {
  std::string phase;  // "train" or "finetune"
  std::size_t task = 0;
  std::size_t epoch = 0;
  double l_n = 0.0;
  double l_r = 0.0;
  double l_o = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Per-image Adam steps over `images` for config.epochs epochs with a fresh
// shuffle per epoch. Returns one log entry per epoch. Throws DivergenceError
// on a non-finite loss, after writing config.divergence_checkpoint.
std::vector<EpochLog> train_task(EpisodeState& state, std::span<const LabeledImage> images,
                                 const TrainConfig& config, const EpochCallback& on_epoch = {});

// Extends the label space and grows the classifier. Throws ContractError when
// a class is already known.
void oracle_step(EpisodeState& state, const std::vector<int>& new_classes);

// Up to `cap` images per known class, sampled uniformly without replacement
// from the images that contain the class; each kept item carries only that
// class's instances.
ExemplarStore build_exemplar_store(std::span<const LabeledImage> pool,
                                   const std::vector<int>& known, std::size_t cap,
                                   std::uint64_t seed);

// Balanced replay over the exemplar store at the reduced learning rate.
// Throws ContractError on an empty store or a missing image.
std::vector<EpochLog> incremental_finetune(EpisodeState& state,
                                           const std::map<std::int64_t, Tensor>& pixels,
                                           const TrainConfig& config,
                                           const EpochCallback& on_epoch = {});

// Deep copy through the checkpoint encoding.
EpisodeState copy_state(const EpisodeState& state);

}  // namespace owdetr::protocol
