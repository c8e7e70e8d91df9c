#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

// Differentiable operations. Each records a backward rule when any input
// requires a gradient; otherwise no history is kept.

// [m x k] . [k x n]
template <typename T>
basic_tensor<T> matmul(const basic_tensor<T>& a, const basic_tensor<T>& b);

template <typename T>
basic_tensor<T> transpose(const basic_tensor<T>& a);

// Same-shape elementwise ops.
template <typename T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b);
template <typename T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b);
template <typename T>
basic_tensor<T> scale(const basic_tensor<T>& a, T factor);

// [m x n] + bias[n] broadcast over rows. A rank-1 `a` is treated as 1 x n.
template <typename T>
basic_tensor<T> add_bias(const basic_tensor<T>& a, const basic_tensor<T>& bias);

template <typename T>
basic_tensor<T> silu(const basic_tensor<T>& x);

// Max-subtracted softmax along `axis`.
template <typename T>
basic_tensor<T> softmax(const basic_tensor<T>& x, std::size_t axis);

// Normalizes over the last axis, then applies gain and bias.
template <typename T>
basic_tensor<T> layer_norm(const basic_tensor<T>& x, const basic_tensor<T>& gain,
                           const basic_tensor<T>& bias, T eps = T(1e-5));

// Inverted dropout. The keep/drop decision for element i is a pure function
// of (seed, i); eval mode is the identity and returns `x` itself.
template <typename T>
basic_tensor<T> dropout(const basic_tensor<T>& x, double rate, std::uint64_t seed,
                        bool training);

// Mean of -log softmax(logits)[label] over the batch rows.
template <typename T>
basic_tensor<T> cross_entropy(const basic_tensor<T>& logits, std::span<const int> labels);

template <typename T>
basic_tensor<T> sum(const basic_tensor<T>& x);

// Column means of an [m x n] matrix, shape [n].
template <typename T>
basic_tensor<T> mean_rows(const basic_tensor<T>& x);

template <typename T>
basic_tensor<T> slice_rows(const basic_tensor<T>& x, std::size_t begin, std::size_t end);
template <typename T>
basic_tensor<T> slice_cols(const basic_tensor<T>& x, std::size_t begin, std::size_t end);

// Stacking along axis 0 (rows) or 1 (columns) of rank-2 tensors. Rank-1
// parts are treated as single rows.
template <typename T>
basic_tensor<T> concat(const std::vector<basic_tensor<T>>& parts, std::size_t axis);

// Same data, new shape.
template <typename T>
basic_tensor<T> reshape(const basic_tensor<T>& x, shape_t shape);

// out[i] = x[index[i]] with the given output shape. Indices may repeat.
template <typename T>
basic_tensor<T> gather(const basic_tensor<T>& x, std::vector<std::size_t> index, shape_t shape);

}  // namespace pathvit
