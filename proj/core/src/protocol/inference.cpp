#include "owdetr/protocol/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "owdetr/numerics/ops.hpp"

namespace owdetr::protocol {

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<long>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(n);
  return idx;
}

DetectionSet infer(const model::Network& net, const data::LabeledImage& image,
                   const data::ClassIndex& classes, const InferConfig& config) {
  numerics::NoGradGuard no_grad;
  const auto out = net.forward(image.pixels).heads;
  const std::size_t m = out.num_queries();
  const std::size_t width = out.class_logits.dim(1);
  const std::size_t first = config.novelty ? 0 : 1;
  const std::size_t used = width - first;

  const auto logits = out.class_logits.data();
  const auto objectness = out.objectness.data();
  std::vector<double> scores(m * used);
  for (std::size_t q = 0; q < m; ++q) {
    for (std::size_t j = 0; j < used; ++j) {
      const double x = logits[q * width + first + j];
      double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      if (config.score_fusion) s *= objectness[q];
      scores[q * used + j] = s;
    }
  }

  DetectionSet set;
  set.image_id = image.image_id;
  const auto boxes = out.boxes.data();
  for (std::size_t flat : top_k_indices(scores, config.top_k)) {
    const std::size_t q = flat / used;
    const std::size_t column = first + flat % used;
    const double* b = boxes.data() + 4 * q;
    set.detections.push_back(
        {classes.label(column), scores[flat], {b[0], b[1], b[2], b[3]}, q});
  }
  return set;
}

std::vector<DetectionSet> infer_all(const model::Network& net,
                                    std::span<const data::LabeledImage> images,
                                    const data::ClassIndex& classes,
                                    const InferConfig& config, std::size_t workers) {
  std::vector<DetectionSet> out(images.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(images.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < images.size();) {
      if (failed) return;
      try {
        out[i] = infer(net, images[i], classes, config);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
        return;
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace owdetr::protocol
