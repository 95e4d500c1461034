#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lomar {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Graph node behind a Tensor handle.
///
/// Values live behind a shared_ptr so that several leaves can alias one
/// parameter buffer while keeping private gradient buffers (see
/// Tensor::shadow). Gradients are allocated lazily.
template <typename T>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<T>> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value->size()) grad.assign(value->size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor with define-by-run reverse-mode gradients.
///
/// A Tensor is a cheap handle: copies share the same node. Operations in
/// ops.hpp build a fresh graph on every forward pass; `backward()` walks it
/// in reverse topological order and accumulates into leaf gradients.
/// Leaf gradients accumulate across backward calls until `zero_grad()`.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value->size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const T> values() const { return *node_->value; }
  std::span<T> mutable_values() { return *node_->value; }
  T at(std::size_t i) const { return (*node_->value)[i]; }
  T at(std::size_t r, std::size_t c) const;
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const noexcept { return node_->is_leaf; }

  bool has_grad() const { return node_->grad.size() == node_->value->size(); }
  /// Gradient buffer; empty span if nothing has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first use.
  std::span<T> grad_buffer() const { return node_->ensure_grad(); }
  void zero_grad();

  /// New leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  /// New leaf aliasing this tensor's value storage with a private gradient.
  Tensor shadow() const;
  /// New leaf with a deep copy of values and requires_grad preserved.
  Tensor clone() const;

  const char* op_name() const { return node_->op; }
  Node& node() const { return *node_; }
  bool same_node(const Tensor& other) const noexcept { return node_ == other.node_; }

  /// Builds an op output. `inputs` become graph parents only when at least
  /// one of them requires a gradient; otherwise `backward` is discarded.
  /// Throws NumericError if any produced value is non-finite.
  static Tensor make_op(const char* op, Shape shape, std::vector<T> values,
                        std::vector<Tensor> inputs, std::function<void(Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  std::shared_ptr<Node> node_;
};

/// Populates gradients of every requires_grad leaf reachable from `loss`.
/// Intermediate gradients are recomputed per call; leaf gradients
/// accumulate. Throws ContractError if `loss` is not a single element.
template <typename T>
void backward(const Tensor<T>& loss);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template void backward<float>(const Tensor<float>&);
extern template void backward<double>(const Tensor<double>&);

}  // namespace lomar
