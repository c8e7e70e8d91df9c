#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pathvit/errors.hpp"

namespace pathvit {

using shape_t = std::vector<std::size_t>;

std::size_t shape_size(const shape_t& shape);
std::string shape_string(const shape_t& shape);

namespace detail {

// One vertex of the computation record. Ops own their inputs through
// shared pointers, so a result keeps its whole history alive.
template <typename T>
struct tensor_node {
  shape_t shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<tensor_node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(tensor_node&)> backward;

  bool is_leaf() const noexcept { return inputs.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
  }
};

}  // namespace detail

// Dense row-major tensor with an optional gradient slot. Values are
// immutable after construction except for leaves, which the optimizer
// updates in place.
template <typename T>
class basic_tensor {
 public:
  using value_type = T;
  using node_type = detail::tensor_node<T>;

  basic_tensor() = default;
  explicit basic_tensor(std::shared_ptr<node_type> node) : node_(std::move(node)) {}

  static basic_tensor zeros(shape_t shape, bool requires_grad = false);
  static basic_tensor full(shape_t shape, T value, bool requires_grad = false);
  static basic_tensor from(shape_t shape, std::vector<T> values, bool requires_grad = false);
  static basic_tensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const shape_t& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  // Leaves only.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad();
  void zero_grad();

  const char* op_name() const { return node_->op; }
  // Copy of the values with no history.
  basic_tensor detach() const;

  const std::shared_ptr<node_type>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<node_type> node_;
};

using tensor = basic_tensor<float>;
using tensor64 = basic_tensor<double>;

// Suspends history recording on the calling thread while alive.
class no_grad_guard {
 public:
  no_grad_guard();
  ~no_grad_guard();
  no_grad_guard(const no_grad_guard&) = delete;
  no_grad_guard& operator=(const no_grad_guard&) = delete;

 private:
  bool previous_;
};
bool grad_mode_enabled() noexcept;

// Reverse-mode sweep from a scalar. Interior gradients are rebuilt on every
// call; leaf gradients accumulate until zero_grad(). Returns the number of
// recorded ops replayed (each exactly once, in reverse topological order).
template <typename T>
std::size_t backward(const basic_tensor<T>& loss);

template <typename To, typename From>
basic_tensor<To> cast(const basic_tensor<From>& t, bool requires_grad);

}  // namespace pathvit
