#include "avlit/tensor.hpp"

#include <unordered_set>

#include "avlit/errors.hpp"

namespace avlit {

namespace {
thread_local bool t_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw DimensionError("Tensor::from", "all",
                         "shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                             " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw DimensionError("item", "all", "tensor has " + std::to_string(size()) + " elements");
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto impl = std::make_shared<detail::TensorImpl<T>>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto copy = detach();
  copy.impl_->requires_grad = impl_->requires_grad;
  return copy;
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) {
    throw DimensionError("backward", "all", "loss must be scalar, got shape " + to_string(shape()));
  }
  if (!impl_->requires_grad) return;

  // Post-order DFS gives a topological order (inputs before consumers).
  std::vector<detail::TensorImpl<T>*> order;
  std::unordered_set<const detail::TensorImpl<T>*> visited;
  struct Frame {
    detail::TensorImpl<T>* impl;
    std::size_t next_input;
  };
  std::vector<Frame> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& frame = stack.back();
    const auto& node = frame.impl->grad_fn;
    if (node && frame.next_input < node->inputs.size()) {
      auto* child = node->inputs[frame.next_input++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
      continue;
    }
    order.push_back(frame.impl);
    stack.pop_back();
  }

  // Interior gradients are per-pass; leaf gradients accumulate.
  for (auto* impl : order) {
    if (impl->grad_fn) impl->grad.assign(impl->data.size(), T(0));
  }
  impl_->grad_buffer()[0] += T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* impl = *it;
    if (!impl->grad_fn) continue;
    impl->grad_fn->backward(*impl, impl->grad_fn->inputs);
  }
}

namespace detail {

template <typename T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      std::function<void(const TensorImpl<T>&, std::span<const ImplPtr<T>>)> backward) {
  auto result = Tensor<T>::from(std::move(shape), std::move(values));
  if (!grad_enabled()) return result;
  bool any = false;
  for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
  if (!any) return result;

  auto node = std::make_shared<Node<T>>();
  node->op = std::move(op);
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    // Undefined optional inputs (e.g. absent bias) are kept as placeholders so
    // backward rules can index inputs positionally.
    node->inputs.push_back(in.defined() ? in.impl() : std::make_shared<TensorImpl<T>>());
  }
  node->backward = std::move(backward);
  result.impl()->requires_grad = true;
  result.impl()->grad_fn = std::move(node);
  return result;
}

template Tensor<float> make_result(std::string, Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(const TensorImpl<float>&, std::span<const ImplPtr<float>>)>);
template Tensor<double> make_result(std::string, Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    std::function<void(const TensorImpl<double>&, std::span<const ImplPtr<double>>)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace avlit
