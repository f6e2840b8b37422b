#include "fpr/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace fpr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->value.assign(shape_numel(shape), fill);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::size() const { return node_->value.size(); }

std::size_t Tensor::rank() const { return node_->shape.size(); }

std::vector<double>& Tensor::values() { return node_->value; }

const std::vector<double>& Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() on non-scalar of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool rg) { node_->requires_grad = rg; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) {
    throw std::runtime_error("tensor: grad requested before backward populated it");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detached() const {
  auto node = std::make_shared<TensorNode>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = false;
  return Tensor(node);
}

namespace {

// Iterative post-order DFS; recursion would overflow on long chains.
void topo_order(const std::shared_ptr<TensorNode>& root,
                std::vector<std::shared_ptr<TensorNode>>& order) {
  std::unordered_set<const TensorNode*> visited;
  std::vector<std::pair<std::shared_ptr<TensorNode>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_parent] = stack.back();
    if (next_parent < node->parents.size()) {
      auto parent = node->parents[next_parent++];
      if (visited.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a defined scalar");
  }
  std::vector<std::shared_ptr<TensorNode>> order;
  topo_order(loss.node(), order);

  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;

  // Reverse topological order; each node visited exactly once.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode& node = **it;
    if (node.backward_fn && node.grad.size() == node.value.size()) {
      node.backward_fn(node);
    }
  }
}

}  // namespace fpr
