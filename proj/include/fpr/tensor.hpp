#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace fpr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One record on the tape. Nodes form a DAG through `parents`; `backward_fn`
// consumes this node's grad and accumulates into the parents' grads.
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantics handle onto a tape node. Copies share the node, so model
// weights can be shared between views while graphs stay cheap to build.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  double item() const;  // requires size() == 1

  bool requires_grad() const;
  void set_requires_grad(bool rg);

  bool has_grad() const;
  const std::vector<double>& grad() const;  // throws if backward never reached this node
  void zero_grad();

  // Constant leaf holding a copy of the values; no history, no grad.
  Tensor detached() const;

  const std::shared_ptr<TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse sweep from a scalar loss: visits the subgraph once in reverse
// topological order and accumulates d loss / d leaf into each requires_grad
// node's grad. Throws std::invalid_argument for non-scalar losses.
void backward(const Tensor& loss);

}  // namespace fpr
