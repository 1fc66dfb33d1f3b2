#include "spotlight/diff/tensor.hpp"

#include <algorithm>
#include <utility>
#include <unordered_set>

namespace spotlight::diff {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), S(0), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S value, bool requires_grad) {
  std::vector<S> values(diff::numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::from(Shape shape, std::vector<S> values,
                          bool requires_grad) {
  if (diff::numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " holds " +
                         std::to_string(diff::numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<S>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::make_result(Shape shape, std::vector<S> value,
                                 std::vector<Tensor> inputs, const char* op,
                                 std::function<void(Node<S>&)> backward) {
  auto out = from(std::move(shape), std::move(value));
  out.node_->op = op;
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward);
    out.node_->inputs.reserve(inputs.size());
    for (auto& t : inputs) out.node_->inputs.push_back(t.node_);
  }
  return out;
}

template <typename S>
std::size_t Tensor<S>::dim(std::size_t i) const {
  if (i >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(i) + " out of range for " +
                         to_string(node_->shape));
  }
  return node_->shape[i];
}

template <typename S>
S Tensor<S>::item() const {
  if (node_->value.size() != 1) {
    throw DimensionError("item() on tensor of shape " +
                         to_string(node_->shape));
  }
  return node_->value[0];
}

template <typename S>
void Tensor<S>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw GraphError("requires_grad can only be set on leaves");
  node_->requires_grad = on;
}

template <typename S>
std::vector<S> Tensor<S>::grad() const {
  if (has_grad()) return node_->grad;
  return std::vector<S>(node_->value.size(), S(0));
}

template <typename S>
Tensor<S> Tensor<S>::detach() const {
  auto node = std::make_shared<Node<S>>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->op = "detach";
  return Tensor(std::move(node));
}

template <typename S>
Tensor<S> Tensor<S>::clone(bool requires_grad) const {
  return from(node_->shape, node_->value, requires_grad);
}

template <typename S>
Tape<S> Tape<S>::record(const Tensor<S>& loss) {
  Tape tape;
  std::unordered_set<const Node<S>*> seen{loss.node().get()};
  // Iterative post-order DFS so long graphs do not exhaust the stack.
  std::vector<std::pair<std::shared_ptr<Node<S>>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const auto& child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    tape.order_.push_back(std::move(node));
    stack.pop_back();
  }
  return tape;
}

template <typename S>
void Tape<S>::run() {
  if (order_.empty()) return;
  auto& root = order_.back();
  root->grad_buffer().assign(root->value.size(), S(1));
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node<S>& node = **it;
    if (node.is_leaf()) continue;
    if (node.backward && node.grad.size() == node.value.size()) node.backward(node);
    node.backward = nullptr;
    node.backward_done = true;
    node.grad.clear();
    node.grad.shrink_to_fit();
  }
}

template <typename S>
void backward(const Tensor<S>& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " +
                     to_string(loss.shape()));
  }
  if (loss.node()->backward_done) {
    throw GraphError("backward already ran on this graph");
  }
  if (!loss.requires_grad()) {
    throw GraphError("loss is detached from every parameter");
  }
  auto tape = Tape<S>::record(loss);
  for (const auto& node : tape.nodes()) {
    if (node->backward_done) {
      throw GraphError(std::string("backward already ran through op '") +
                       node->op + "'");
    }
  }
  tape.run();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace spotlight::diff
