#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathvit/encoder.hpp"
#include "pathvit/tensor.hpp"

namespace pathvit {

enum class run_mode { train, eval };

struct head_config {
  std::size_t embed_dim = 32;
  std::size_t bottleneck = 16;
  std::size_t classes = 9;
  double dropout_rate = 0.5;

  void validate() const;
  std::size_t input_dim() const { return 2 * embed_dim; }

  bool operator==(const head_config&) const = default;
};

template <typename T>
struct head_weights {
  basic_tensor<T> w1;  // [2D x bottleneck]
  basic_tensor<T> b1;  // [bottleneck]
  basic_tensor<T> w2;  // [bottleneck x K]
  basic_tensor<T> b2;  // [K]

  static head_weights init(const head_config& cfg, std::uint64_t seed);
  static head_weights zeros(const head_config& cfg);

  template <typename Fn>
  void visit(Fn&& fn) {
    fn("head.w1", w1);
    fn("head.b1", b1);
    fn("head.w2", w2);
    fn("head.b2", b2);
  }

  std::vector<named_tensor<T>> parameters() const {
    return {{"head.w1", w1}, {"head.b1", b1}, {"head.w2", w2}, {"head.b2", b2}};
  }
};

// [mean of patch tokens || class token], shape [2D]. Registers are ignored.
template <typename T>
basic_tensor<T> aggregate_features(const token_set<T>& tokens);

// logits = W2^T dropout(silu(W1^T f + b1)) + b2. Accepts a single feature
// vector [2D] (-> [K]) or a batch [B x 2D] (-> [B x K]). Dropout is active
// only in train mode, with its mask drawn from `seed`.
template <typename T>
basic_tensor<T> head_forward(const basic_tensor<T>& features, const head_weights<T>& w,
                             const head_config& cfg, run_mode mode, std::uint64_t seed);

// Argmax; ties go to the lowest class index.
template <typename T>
int predict(std::span<const T> logits);

template <typename To, typename From>
head_weights<To> cast_weights(const head_weights<From>& w, bool requires_grad);

}  // namespace pathvit
