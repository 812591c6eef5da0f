#include <benchmark/benchmark.h>

#include <vector>

#include "owdetr/data/synthetic.hpp"
#include "owdetr/matching/matching.hpp"
#include "owdetr/model/network.hpp"
#include "owdetr/numerics/ops.hpp"
#include "owdetr/openworld/pseudo_label.hpp"
#include "owdetr/protocol/episode.hpp"
#include "owdetr/protocol/inference.hpp"

namespace nm = owdetr::numerics;
using nm::Tensor;

namespace {

Tensor random(nm::Shape shape, std::uint64_t seed, bool grad = false) {
  nm::Rng rng(seed);
  std::vector<double> v(nm::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random({n, n}, 1), b = random({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nm::matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

static void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  auto x = random({c, 32, 32}, 3, true), w = random({2 * c, c, 3, 3}, 4, true);
  auto bias = random({2 * c}, 5, true);
  for (auto _ : state) {
    auto y = nm::sum(nm::conv2d(x, w, bias, 2, 1));
    nm::backward(y);
    x.zero_grad();
    w.zero_grad();
    bias.zero_grad();
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(3)->Arg(8)->Arg(16);

static void BM_BilinearSample(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto feature = random({32, 16, 16}, 6);
  nm::Rng rng(7);
  std::vector<double> pts(2 * n);
  for (auto& p : pts) p = rng.uniform(0.0, 16.0);
  const auto points = Tensor::from({n, 2}, pts);
  for (auto _ : state) benchmark::DoNotOptimize(nm::bilinear_sample(feature, points));
}
BENCHMARK(BM_BilinearSample)->Arg(64)->Arg(512);

static void BM_Hungarian(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  owdetr::matching::CostMatrix cost(m, m / 2);
  nm::Rng rng(8);
  for (auto& v : cost.values) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(owdetr::matching::hungarian_assign(cost));
}
BENCHMARK(BM_Hungarian)->Arg(20)->Arg(100);

static void BM_ObjectnessScore(benchmark::State& state) {
  const auto attention = random({16, 16}, 9);
  const owdetr::data::BoundingBox box{0.4, 0.6, 0.3, 0.2};
  for (auto _ : state) benchmark::DoNotOptimize(owdetr::openworld::objectness_score(attention, box));
}
BENCHMARK(BM_ObjectnessScore);

static void BM_TopK(benchmark::State& state) {
  nm::Rng rng(10);
  std::vector<double> scores(static_cast<std::size_t>(state.range(0)));
  for (auto& s : scores) s = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(owdetr::protocol::top_k_indices(scores, 50));
}
BENCHMARK(BM_TopK)->Arg(180)->Arg(8100);

static void BM_NetworkForward(benchmark::State& state) {
  owdetr::model::Network net(owdetr::model::ModelConfig{}, 4);
  const auto x = random({3, 64, 64}, 11);
  for (auto _ : state) {
    nm::NoGradGuard guard;
    benchmark::DoNotOptimize(net.forward(x));
  }
}
BENCHMARK(BM_NetworkForward)->Unit(benchmark::kMillisecond);

static void BM_TrainStep(benchmark::State& state) {
  auto split = owdetr::data::default_split();
  split.images_per_task_train = 4;
  split.images_test = 1;
  const auto ds = owdetr::data::generate_dataset(split);
  const auto images = owdetr::data::materialize(ds.train[0], ds.rasters);
  auto s = owdetr::protocol::EpisodeState::initial(owdetr::model::ModelConfig{}, split.tasks[0], 1);
  owdetr::protocol::TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) owdetr::protocol::train_task(s, images, cfg);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(images.size()));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
