#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace owdetr::numerics {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(const Node& out)>;

// One value in the define-by-run graph. Inputs are held by shared ownership so
// the graph stays alive as long as the loss tensor does.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first backward touches it
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;
  std::string_view op = "leaf";

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad();
};

// Handle to a graph node. Copies alias the same storage, like the handles of
// most define-by-run engines; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  // Direct write access, used by optimizers and tests. Never call on a tensor
  // whose graph still has a pending backward.
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t flat) const { return node_->data[flat]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zero-filled span of numel() when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  // Value copy cut from the graph.
  Tensor detach() const;
  // Independent deep copy (value, requires_grad flag, no grad, no history).
  Tensor clone() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Records an operation result. When gradient recording is enabled and any
// input requires grad, the result keeps its inputs and the backward rule.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward,
                   std::string_view op);

bool grad_enabled();

// Disables recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered view of the graph reachable from a root: every node
// appears after all of its inputs, each node exactly once.
class Tape {
 public:
  static Tape record(const Tensor& root);

  std::span<Node* const> nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and replays backward rules in reverse order.
  // Non-leaf gradients are reset first; leaf gradients accumulate.
  void backward();

 private:
  std::vector<Node*> nodes_;
  NodePtr root_;
};

// Reverse-mode pass from a scalar loss. Throws ContractError on a non-scalar
// loss.
void backward(const Tensor& loss);

}  // namespace owdetr::numerics
