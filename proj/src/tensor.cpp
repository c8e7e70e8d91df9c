#include "pathvit/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <unordered_set>

namespace pathvit {

std::size_t shape_size(const shape_t& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const shape_t& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
thread_local bool grad_enabled = true;
}

no_grad_guard::no_grad_guard() : previous_(grad_enabled) { grad_enabled = false; }
no_grad_guard::~no_grad_guard() { grad_enabled = previous_; }
bool grad_mode_enabled() noexcept { return grad_enabled; }

template <typename T>
basic_tensor<T> basic_tensor<T>::zeros(shape_t shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
basic_tensor<T> basic_tensor<T>::full(shape_t shape, T value, bool requires_grad) {
  auto n = std::make_shared<node_type>();
  n->data.assign(shape_size(shape), value);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return basic_tensor(std::move(n));
}

template <typename T>
basic_tensor<T> basic_tensor<T>::from(shape_t shape, std::vector<T> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw dimension_error("tensor: shape " + shape_string(shape) + " needs " +
                          std::to_string(shape_size(shape)) + " values, got " +
                          std::to_string(values.size()));
  }
  auto n = std::make_shared<node_type>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  return basic_tensor(std::move(n));
}

template <typename T>
basic_tensor<T> basic_tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
std::span<T> basic_tensor<T>::mutable_data() {
  if (!node_->is_leaf()) throw contract_error("mutable_data: only leaf tensors are writable");
  return node_->data;
}

template <typename T>
T basic_tensor<T>::item() const {
  if (size() != 1) throw contract_error("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return node_->data[0];
}

template <typename T>
void basic_tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw contract_error("set_requires_grad: only leaf tensors");
  node_->requires_grad = on;
}

template <typename T>
std::span<T> basic_tensor<T>::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void basic_tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
basic_tensor<T> basic_tensor<T>::detach() const {
  return from(shape(), node_->data, false);
}

template <typename T>
std::size_t backward(const basic_tensor<T>& loss) {
  using node_type = detail::tensor_node<T>;
  if (!loss.defined() || loss.size() != 1) {
    throw contract_error("backward: loss must be a scalar, got shape " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return 0;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<node_type*> order;
  std::unordered_set<node_type*> seen;
  std::vector<std::pair<node_type*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      node_type* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (node_type* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), T{0});
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += T{1};

  std::size_t replayed = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    node_type* n = *it;
    if (n->is_leaf() || !n->backward) continue;
    for (auto& in : n->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    n->backward(*n);
    ++replayed;
  }
  return replayed;
}

template <typename To, typename From>
basic_tensor<To> cast(const basic_tensor<From>& t, bool requires_grad) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return basic_tensor<To>::from(t.shape(), std::move(values), requires_grad);
}

template class basic_tensor<float>;
template class basic_tensor<double>;
template std::size_t backward(const basic_tensor<float>&);
template std::size_t backward(const basic_tensor<double>&);
template basic_tensor<double> cast(const basic_tensor<float>&, bool);
template basic_tensor<float> cast(const basic_tensor<double>&, bool);
template basic_tensor<float> cast(const basic_tensor<float>&, bool);
template basic_tensor<double> cast(const basic_tensor<double>&, bool);

}  // namespace pathvit
