#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

// Compares the reverse-mode gradient of a scalar function against central
// differences. Returns max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8).
// `f` must be deterministic (fixed dropout seeds).
template <typename T>
double finite_diff_check(const std::function<basic_tensor<T>(const basic_tensor<T>&)>& f,
                         const basic_tensor<T>& x, double step) {
  auto leaf = basic_tensor<T>::from(x.shape(), std::vector<T>(x.data().begin(), x.data().end()), true);
  backward(f(leaf));
  std::vector<T> analytic(leaf.grad().begin(), leaf.grad().end());
  if (analytic.empty()) analytic.assign(leaf.size(), T{0});

  std::vector<T> probe(x.data().begin(), x.data().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const T original = probe[i];
    probe[i] = original + static_cast<T>(step);
    const double up = f(basic_tensor<T>::from(x.shape(), probe)).item();
    probe[i] = original - static_cast<T>(step);
    const double down = f(basic_tensor<T>::from(x.shape(), probe)).item();
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace pathvit
