#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto shared storage. Values are fixed once an op
// produces them; only the gradient buffer changes after construction (and the
// optimizer rewrites leaf parameters in place between steps). Each op that
// consumes a grad-requiring input records a Node holding its inputs and a
// backward rule, so the graph is a DAG rooted at the loss.
//
// Precision is a template parameter: float for training and inference, double
// for gradient checks.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace avlit {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct TensorImpl;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
struct Node {
  std::string op;
  std::vector<ImplPtr<T>> inputs;
  // Reads out.grad (and out.data if the rule needs it), accumulates into inputs.
  std::function<void(const TensorImpl<T>& out, std::span<const ImplPtr<T>> inputs)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<Node<T>> grad_fn;

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Gradient buffer of an op input, or nullptr when that input needs no gradient.
template <typename T>
T* grad_of(const ImplPtr<T>& input) {
  return input->requires_grad ? input->grad_buffer().data() : nullptr;
}

}  // namespace detail

/// Graph recording is on by default; this guard disables it for the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false) { return from({}, {value}, requires_grad); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  /// In-place access. Only for leaf tensors (parameters) outside a recorded pass.
  std::span<T> mutable_data() { return impl_->data; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  std::span<T> mutable_grad() { return impl_->grad_buffer(); }
  void zero_grad() { impl_->grad.clear(); }
  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  /// Back-propagates from this scalar. Leaf gradients accumulate across calls.
  void backward() const;

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  /// Deep copy of the values into a fresh leaf.
  Tensor clone() const;

  const detail::ImplPtr<T>& impl() const { return impl_; }
  explicit Tensor(detail::ImplPtr<T> impl) : impl_(std::move(impl)) {}

 private:
  detail::ImplPtr<T> impl_;
};

namespace detail {

/// Wraps freshly computed values as an op result, recording the node when any
/// input needs a gradient and recording is enabled.
template <typename T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(const TensorImpl<T>&, std::span<const ImplPtr<T>>)> backward);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace avlit
