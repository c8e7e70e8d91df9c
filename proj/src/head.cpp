#include "pathvit/head.hpp"

#include "pathvit/ops.hpp"
#include "pathvit/rng.hpp"

namespace pathvit {

void head_config::validate() const {
  if (embed_dim == 0 || bottleneck == 0 || classes == 0) {
    throw config_error("head: embed_dim, bottleneck and classes must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw config_error("head: dropout_rate must lie in [0, 1)");
  }
}

template <typename T>
head_weights<T> head_weights<T>::init(const head_config& cfg, std::uint64_t seed) {
  cfg.validate();
  rng gen(seed);
  auto normal = [&](shape_t shape) {
    std::vector<T> v(shape_size(shape));
    for (auto& x : v) x = static_cast<T>(gen.normal(0.0, 0.02));
    return basic_tensor<T>::from(std::move(shape), std::move(v), true);
  };
  head_weights w;
  w.w1 = normal({cfg.input_dim(), cfg.bottleneck});
  w.b1 = basic_tensor<T>::zeros({cfg.bottleneck}, true);
  w.w2 = normal({cfg.bottleneck, cfg.classes});
  w.b2 = basic_tensor<T>::zeros({cfg.classes}, true);
  return w;
}

template <typename T>
head_weights<T> head_weights<T>::zeros(const head_config& cfg) {
  cfg.validate();
  head_weights w;
  w.w1 = basic_tensor<T>::zeros({cfg.input_dim(), cfg.bottleneck}, true);
  w.b1 = basic_tensor<T>::zeros({cfg.bottleneck}, true);
  w.w2 = basic_tensor<T>::zeros({cfg.bottleneck, cfg.classes}, true);
  w.b2 = basic_tensor<T>::zeros({cfg.classes}, true);
  return w;
}

template <typename T>
basic_tensor<T> aggregate_features(const token_set<T>& tokens) {
  const std::size_t d = tokens.class_token.size();
  if (tokens.patches.rank() != 2 || tokens.patches.dim(1) != d) {
    throw dimension_error("aggregate_features: patch tokens " + shape_string(tokens.patches.shape()) +
                          " do not match class token " + shape_string(tokens.class_token.shape()));
  }
  auto mean = mean_rows(tokens.patches);
  return reshape(concat<T>({mean, tokens.class_token}, 1), {2 * d});
}

template <typename T>
basic_tensor<T> head_forward(const basic_tensor<T>& features, const head_weights<T>& w,
                             const head_config& cfg, run_mode mode, std::uint64_t seed) {
  const bool single = features.rank() == 1;
  const auto& s = features.shape();
  if ((s.size() != 1 && s.size() != 2) || s.back() != cfg.input_dim()) {
    throw dimension_error("head_forward: expected features of width " + std::to_string(cfg.input_dim()) +
                          ", got " + shape_string(s));
  }
  auto x = single ? reshape(features, {1, cfg.input_dim()}) : features;
  auto h = silu(add_bias(matmul(x, w.w1), w.b1));
  h = dropout(h, cfg.dropout_rate, seed, mode == run_mode::train);
  auto logits = add_bias(matmul(h, w.w2), w.b2);
  return single ? reshape(logits, {cfg.classes}) : logits;
}

template <typename T>
int predict(std::span<const T> logits) {
  if (logits.empty()) throw dimension_error("predict: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

template <typename To, typename From>
head_weights<To> cast_weights(const head_weights<From>& w, bool requires_grad) {
  return {cast<To>(w.w1, requires_grad), cast<To>(w.b1, requires_grad), cast<To>(w.w2, requires_grad),
          cast<To>(w.b2, requires_grad)};
}

template struct head_weights<float>;
template struct head_weights<double>;
template basic_tensor<float> aggregate_features(const token_set<float>&);
template basic_tensor<double> aggregate_features(const token_set<double>&);
template basic_tensor<float> head_forward(const basic_tensor<float>&, const head_weights<float>&,
                                          const head_config&, run_mode, std::uint64_t);
template basic_tensor<double> head_forward(const basic_tensor<double>&, const head_weights<double>&,
                                           const head_config&, run_mode, std::uint64_t);
template int predict(std::span<const float>);
template int predict(std::span<const double>);
template head_weights<double> cast_weights(const head_weights<float>&, bool);
template head_weights<float> cast_weights(const head_weights<double>&, bool);
template head_weights<float> cast_weights(const head_weights<float>&, bool);

}  // namespace pathvit
