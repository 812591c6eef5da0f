#include "owdetr/protocol/episode.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "owdetr/errors.hpp"
#include "owdetr/protocol/checkpoint.hpp"

namespace owdetr::protocol {
namespace {

void shuffle(std::vector<std::size_t>& order, numerics::Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
}

std::vector<EpochLog> run_epochs(EpisodeState& state, std::span<const LabeledImage> images,
                                 const TrainConfig& config, double lr, std::size_t epochs,
                                 const std::string& phase, const EpochCallback& on_epoch) {
  std::vector<EpochLog> logs;
  if (images.empty() || epochs == 0) return logs;
  const data::ClassIndex classes = state.labels.index();
  AdamConfig adam = config.adam;
  adam.lr = lr;
  const std::size_t accumulate = std::max<std::size_t>(config.accumulate, 1);

  std::vector<std::size_t> order(images.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, state.rng);

    EpochLog log;
    log.phase = phase;
    log.task = state.labels.task();
    log.epoch = e + 1;
    std::size_t pending = 0;
    for (std::size_t idx : order) {
      const LabeledImage& image = images[idx];
      const auto forward = state.network.forward(image.pixels);
      openworld::ImageLoss loss;
      try {
        loss = openworld::compute_image_loss(forward, image.instances, classes, config.loss);
      } catch (const DivergenceError& err) {
        std::string where;
        if (!config.divergence_checkpoint.empty()) {
          checkpoint_save(state, config.divergence_checkpoint);
          where = "; last good state saved to " + config.divergence_checkpoint.string();
        }
        throw DivergenceError(std::string(err.what()) + " at " + phase + " epoch " +
                              std::to_string(e + 1) + ", image " +
                              std::to_string(image.image_id) + where);
      }
      numerics::backward(loss.total);
      log.l_n += loss.novelty.item();
      log.l_r += loss.regression.item();
      log.l_o += loss.objectness.item();
      log.total += loss.total.item();
      if (++pending == accumulate) {
        state.optimizer.step(state.network, adam, 1.0 / static_cast<double>(pending));
        pending = 0;
      }
      ++state.counters.steps;
    }
    if (pending > 0) {
      state.optimizer.step(state.network, adam, 1.0 / static_cast<double>(pending));
    }
    const double n = static_cast<double>(images.size());
    log.l_n /= n;
    log.l_r /= n;
    log.l_o /= n;
    log.total /= n;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++state.counters.epochs;
    if (on_epoch) on_epoch(log);
    logs.push_back(log);
  }
  return logs;
}

}  // namespace

std::size_t ExemplarStore::size() const {
  std::size_t n = 0;
  for (const auto& [c, items] : by_class) n += items.size();
  return n;
}

EpisodeState EpisodeState::initial(const model::ModelConfig& cfg,
                                   const std::vector<int>& first_task, std::uint64_t seed) {
  if (first_task.empty()) throw ContractError("the first task must introduce classes");
  model::ModelConfig c = cfg;
  c.seed = seed;
  EpisodeState s{model::Network(c, first_task.size()), {}, {}, {},
                 numerics::Rng(numerics::Rng::derive(seed, 0x7452'4149'4eULL)), {}};
  s.labels.add(first_task);
  return s;
}

std::vector<EpochLog> train_task(EpisodeState& state, std::span<const LabeledImage> images,
                                 const TrainConfig& config, const EpochCallback& on_epoch) {
  for (const auto& image : images) {
    for (const auto& inst : image.instances) {
      if (!state.labels.is_known(inst.label)) {
        throw ContractError("train_task: image " + std::to_string(image.image_id) +
                            " has label " + std::to_string(inst.label) +
                            " outside the known set");
      }
    }
  }
  return run_epochs(state, images, config, config.adam.lr, config.epochs, "train", on_epoch);
}

void oracle_step(EpisodeState& state, const std::vector<int>& new_classes) {
  state.labels.add(new_classes);
  state.network.grow_classifier(new_classes.size(), state.rng);
}

ExemplarStore build_exemplar_store(std::span<const LabeledImage> pool,
                                   const std::vector<int>& known, std::size_t cap,
                                   std::uint64_t seed) {
  if (cap == 0) throw ContractError("build_exemplar_store: cap must be at least 1");
  ExemplarStore store;
  for (int c : known) {
    std::vector<ExemplarItem> candidates;
    for (const auto& image : pool) {
      ExemplarItem item{image.image_id, {}};
      for (const auto& inst : image.instances) {
        if (inst.label == c) item.instances.push_back(inst);
      }
      if (!item.instances.empty()) candidates.push_back(std::move(item));
    }
    numerics::Rng rng(numerics::Rng::derive(seed, static_cast<std::uint64_t>(c)));
    const std::size_t keep = std::min(cap, candidates.size());
    // Partial Fisher-Yates: the first `keep` slots form the sample.
    for (std::size_t i = 0; i < keep; ++i) {
      const std::size_t j = i + rng.below(candidates.size() - i);
      std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(keep);
    store.by_class[c] = std::move(candidates);
  }
  return store;
}

std::vector<EpochLog> incremental_finetune(EpisodeState& state,
                                           const std::map<std::int64_t, Tensor>& pixels,
                                           const TrainConfig& config,
                                           const EpochCallback& on_epoch) {
  if (state.exemplars.empty()) {
    throw ContractError("incremental_finetune: exemplar store is empty");
  }
  std::vector<LabeledImage> replay;
  for (int c : state.labels.known()) {
    const auto it = state.exemplars.by_class.find(c);
    if (it == state.exemplars.by_class.end()) continue;
    for (const auto& item : it->second) {
      const auto px = pixels.find(item.image_id);
      if (px == pixels.end()) {
        throw ContractError("incremental_finetune: no pixels for exemplar image " +
                            std::to_string(item.image_id));
      }
      replay.push_back({px->second, item.instances, item.image_id});
    }
  }
  return run_epochs(state, replay, config, config.finetune_lr(), config.finetune_epochs,
                    "finetune", on_epoch);
}

EpisodeState copy_state(const EpisodeState& state) {
  return decode_checkpoint(encode_checkpoint(state));
}

}  // namespace owdetr::protocol
