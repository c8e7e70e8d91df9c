#pragma once

// Straight-line reference implementations used by the unit and acceptance
// tests. Deliberately naive.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pathvit/image.hpp"
#include "pathvit/metrics.hpp"
#include "pathvit/rng.hpp"

namespace oracle {

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// counts[t][p] by scanning every cell and counting matching samples.
inline std::vector<std::int64_t> tally(const std::vector<int>& preds, const std::vector<int>& labels, int k) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(k * k), 0);
  for (int t = 0; t < k; ++t)
    for (int p = 0; p < k; ++p)
      for (std::size_t s = 0; s < preds.size(); ++s)
        if (labels[s] == t && preds[s] == p) ++out[static_cast<std::size_t>(t * k + p)];
  return out;
}

struct fraction {
  std::int64_t num = 0, den = 1;
};

inline fraction reduce(std::int64_t num, std::int64_t den) {
  const std::int64_t g = std::gcd(num, den);
  return g ? fraction{num / g, den / g} : fraction{num, den};
}

inline fraction mul(fraction a, fraction b) { return reduce(a.num * b.num, a.den * b.den); }
inline fraction add(fraction a, fraction b) { return reduce(a.num * b.den + b.num * a.den, a.den * b.den); }
inline fraction div(fraction a, fraction b) { return reduce(a.num * b.den, a.den * b.num); }
inline double value(fraction f) { return static_cast<double>(f.num) / static_cast<double>(f.den); }

struct binary_expected {
  double accuracy, precision, recall, specificity, f1, mcc;
  bool precision_defined, recall_defined, specificity_defined, f1_defined, mcc_defined;
};

// Six binary metrics in exact integer/rational arithmetic, rounded once at the end.
inline binary_expected binary(const pathvit::binary_counts& b) {
  binary_expected e{};
  const std::int64_t n = b.tp + b.tn + b.fp + b.fn;
  e.accuracy = value(reduce(b.tp + b.tn, n));
  e.precision_defined = b.tp + b.fp > 0;
  e.recall_defined = b.tp + b.fn > 0;
  e.specificity_defined = b.tn + b.fp > 0;
  e.precision = e.precision_defined ? value(reduce(b.tp, b.tp + b.fp)) : 0.0;
  e.recall = e.recall_defined ? value(reduce(b.tp, b.tp + b.fn)) : 0.0;
  e.specificity = e.specificity_defined ? value(reduce(b.tn, b.tn + b.fp)) : 0.0;
  e.f1_defined = e.precision_defined && e.recall_defined && b.tp > 0;
  if (e.f1_defined) {
    const fraction p = reduce(b.tp, b.tp + b.fp), r = reduce(b.tp, b.tp + b.fn);
    e.f1 = value(div(mul(fraction{2, 1}, mul(p, r)), add(p, r)));
  }
  const std::int64_t num = b.tp * b.tn - b.fp * b.fn;
  const std::int64_t den = (b.tp + b.fp) * (b.tp + b.fn) * (b.tn + b.fp) * (b.tn + b.fn);
  e.mcc_defined = den != 0;
  e.mcc = den ? static_cast<double>(num) / std::sqrt(static_cast<double>(den)) : 0.0;
  return e;
}

// Gorodkin's triple sum, written out term by term.
inline double mcc_brute(const pathvit::confusion_matrix& cm) {
  const std::size_t k = cm.classes();
  auto c = [&](std::size_t i, std::size_t j) { return static_cast<double>(cm.at(i, j)); };
  double num = 0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t m = 0; m < k; ++m) num += c(a, a) * c(l, m) - c(a, l) * c(m, a);
  double d1 = 0, d2 = 0;
  for (std::size_t a = 0; a < k; ++a) {
    double row = 0, rest_rows = 0, col = 0, rest_cols = 0;
    for (std::size_t l = 0; l < k; ++l) {
      row += c(a, l);
      col += c(l, a);
    }
    for (std::size_t b = 0; b < k; ++b) {
      if (b == a) continue;
      for (std::size_t l = 0; l < k; ++l) {
        rest_rows += c(b, l);
        rest_cols += c(l, b);
      }
    }
    d1 += row * rest_rows;
    d2 += col * rest_cols;
  }
  if (d1 == 0 || d2 == 0) return 0.0;
  return num / (std::sqrt(d1) * std::sqrt(d2));
}

// Per-pixel bilinear sample with half-pixel centers, evaluated from the
// continuous formula with separate x/y weights.
inline pathvit::image_patch bilinear(const pathvit::image_patch& src, std::size_t w, std::size_t h) {
  auto out = pathvit::image_patch::blank(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double sy = (y + 0.5) * src.height / h - 0.5;
      double sx = (x + 0.5) * src.width / w - 0.5;
      sy = std::min(std::max(sy, 0.0), double(src.height - 1));
      sx = std::min(std::max(sx, 0.0), double(src.width - 1));
      const auto y0 = std::size_t(std::floor(sy)), x0 = std::size_t(std::floor(sx));
      const auto y1 = std::min(y0 + 1, src.height - 1), x1 = std::min(x0 + 1, src.width - 1);
      const double ty = sy - y0, tx = sx - x0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = (1 - ty) * (1 - tx) * src.at(y0, x0, ch) + (1 - ty) * tx * src.at(y0, x1, ch) +
                         ty * (1 - tx) * src.at(y1, x0, ch) + ty * tx * src.at(y1, x1, ch);
        out.at(y, x, ch) = static_cast<std::uint8_t>(std::floor(v + 0.5));
      }
    }
  }
  return out;
}

inline pathvit::confusion_matrix random_confusion(pathvit::rng& gen, std::size_t k, std::int64_t max_cell) {
  pathvit::confusion_matrix cm(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) cm.add(i, j, static_cast<std::int64_t>(gen.below(max_cell + 1)));
  return cm;
}

}  // namespace oracle
