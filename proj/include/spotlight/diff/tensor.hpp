#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace spotlight::diff {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t numel(const Shape& shape);

/// Raised when operand shapes are incompatible for an operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for misuse of the gradient graph (non-scalar loss, detached loss,
/// second backward over the same graph).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;
  bool requires_grad = false;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `self.grad` and accumulates into the inputs' grad buffers.
  std::function<void(Node& self)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::vector<S>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    return grad;
  }
};

/// Shape-tagged dense array with optional participation in a reverse-mode
/// gradient graph. Copies share the underlying node.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using NodePtr = std::shared_ptr<Node<S>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, S value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<S> values,
                     bool requires_grad = false);
  static Tensor scalar(S value, bool requires_grad = false);

  /// Builds the output of a differentiable operation. The backward closure is
  /// kept only if some input requires a gradient.
  static Tensor make_result(Shape shape, std::vector<S> value,
                            std::vector<Tensor> inputs, const char* op,
                            std::function<void(Node<S>&)> backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const S> data() const { return node_->value; }
  /// Direct write access; intended for leaves (parameters, inputs).
  std::span<S> mutable_data() { return node_->value; }
  S item() const;
  S at(std::size_t i) const { return node_->value[i]; }
  S at(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape[1] + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient buffer; zeros when no gradient has been accumulated.
  std::vector<S> grad() const;
  std::span<S> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Same values, no graph linkage.
  Tensor detach() const;
  /// Deep copy of values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  template <typename T>
  Tensor<T> cast(bool requires_grad = false) const {
    std::vector<T> out(node_->value.begin(), node_->value.end());
    return Tensor<T>::from(node_->shape, std::move(out), requires_grad);
  }

  const NodePtr& node() const { return node_; }

 private:
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

/// Ordered record of the operations reachable from a loss; inputs always
/// precede their consumers.
template <typename S>
class Tape {
 public:
  static Tape record(const Tensor<S>& loss);
  std::size_t size() const { return order_.size(); }
  const std::vector<std::shared_ptr<Node<S>>>& nodes() const { return order_; }
  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void run();

 private:
  std::vector<std::shared_ptr<Node<S>>> order_;
};

/// Accumulates d(loss)/d(leaf) into every requires_grad leaf reachable from
/// `loss`. A graph can be differentiated once.
template <typename S>
void backward(const Tensor<S>& loss);

}  // namespace spotlight::diff
