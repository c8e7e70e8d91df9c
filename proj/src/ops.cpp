#include "pathvit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>

#include "pathvit/rng.hpp"

namespace pathvit {
namespace {

template <typename T>
using node_ptr = std::shared_ptr<detail::tensor_node<T>>;

template <typename T>
using row_matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const row_matrix<T>> view(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

template <typename T>
Eigen::Map<row_matrix<T>> view(std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

// Allocates the output node; links inputs only when a gradient is needed.
template <typename T>
node_ptr<T> make_node(shape_t shape, std::vector<T> data, const char* op,
                      std::initializer_list<const basic_tensor<T>*> inputs) {
  auto n = std::make_shared<detail::tensor_node<T>>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  if (grad_mode_enabled()) {
    for (auto* in : inputs) n->requires_grad = n->requires_grad || in->requires_grad();
  }
  if (n->requires_grad) {
    for (auto* in : inputs) n->inputs.push_back(in->node());
  }
  return n;
}

template <typename T>
bool wants_grad(const detail::tensor_node<T>& n, std::size_t i) {
  return n.inputs[i]->requires_grad;
}

void require_rank(const char* op, const shape_t& s, std::size_t rank) {
  if (s.size() != rank) {
    throw dimension_error(std::string(op) + ": expected rank " + std::to_string(rank) +
                          ", got shape " + shape_string(s));
  }
}

void require_same(const char* op, const shape_t& a, const shape_t& b) {
  if (a != b) {
    throw dimension_error(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                          shape_string(b));
  }
}

// Views rank-1 as a single row.
std::pair<std::size_t, std::size_t> as_matrix(const shape_t& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw dimension_error("expected rank 1 or 2, got shape " + shape_string(s));
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

}  // namespace

template <typename T>
basic_tensor<T> matmul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  require_rank("matmul", a.shape(), 2);
  require_rank("matmul", b.shape(), 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw dimension_error("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                          shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  view(out, m, n).noalias() = view(a.node()->data, m, k) * view(b.node()->data, k, n);
  auto r = make_node<T>({m, n}, std::move(out), "matmul", {&a, &b});
  if (r->requires_grad) {
    r->backward = [m, k, n](detail::tensor_node<T>& self) {
      auto& A = *self.inputs[0];
      auto& B = *self.inputs[1];
      const auto G = view(std::as_const(self.grad), m, n);
      if (A.requires_grad) view(A.grad, m, k).noalias() += G * view(std::as_const(B.data), k, n).transpose();
      if (B.requires_grad) view(B.grad, k, n).noalias() += view(std::as_const(A.data), m, k).transpose() * G;
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> transpose(const basic_tensor<T>& a) {
  require_rank("transpose", a.shape(), 2);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  view(out, n, m) = view(a.node()->data, m, n).transpose();
  auto r = make_node<T>({n, m}, std::move(out), "transpose", {&a});
  if (r->requires_grad) {
    r->backward = [m, n](detail::tensor_node<T>& self) {
      view(self.inputs[0]->grad, m, n) += view(std::as_const(self.grad), n, m).transpose();
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  require_same("add", a.shape(), b.shape());
  std::vector<T> out(a.size());
  const auto& x = a.node()->data;
  const auto& y = b.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto r = make_node<T>(a.shape(), std::move(out), "add", {&a, &b});
  if (r->requires_grad) {
    r->backward = [](detail::tensor_node<T>& self) {
      for (std::size_t j = 0; j < 2; ++j) {
        if (!wants_grad(self, j)) continue;
        auto& g = self.inputs[j]->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
  require_same("mul", a.shape(), b.shape());
  std::vector<T> out(a.size());
  const auto& x = a.node()->data;
  const auto& y = b.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto r = make_node<T>(a.shape(), std::move(out), "mul", {&a, &b});
  if (r->requires_grad) {
    r->backward = [](detail::tensor_node<T>& self) {
      auto& A = *self.inputs[0];
      auto& B = *self.inputs[1];
      if (A.requires_grad)
        for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += self.grad[i] * B.data[i];
      if (B.requires_grad)
        for (std::size_t i = 0; i < B.grad.size(); ++i) B.grad[i] += self.grad[i] * A.data[i];
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> scale(const basic_tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  auto r = make_node<T>(a.shape(), std::move(out), "scale", {&a});
  if (r->requires_grad) {
    r->backward = [factor](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> add_bias(const basic_tensor<T>& a, const basic_tensor<T>& bias) {
  const auto [m, n] = as_matrix(a.shape());
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw dimension_error("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                          shape_string(a.shape()));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  const auto& b = bias.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  auto r = make_node<T>(a.shape(), std::move(out), "add_bias", {&a, &bias});
  if (r->requires_grad) {
    r->backward = [m, n](detail::tensor_node<T>& self) {
      if (wants_grad(self, 0)) {
        auto& g = self.inputs[0]->grad;
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
      if (wants_grad(self, 1)) {
        auto& g = self.inputs[1]->grad;
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> silu(const basic_tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto& v = x.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * sigmoid(v[i]);
  auto r = make_node<T>(x.shape(), std::move(out), "silu", {&x});
  if (r->requires_grad) {
    r->backward = [](detail::tensor_node<T>& self) {
      auto& X = *self.inputs[0];
      for (std::size_t i = 0; i < X.grad.size(); ++i) {
        const T s = sigmoid(X.data[i]);
        X.grad[i] += self.grad[i] * s * (T{1} + X.data[i] * (T{1} - s));
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> softmax(const basic_tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw dimension_error("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                          shape_string(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto& v = x.node()->data;
  std::vector<T> out(v.size());
  if (inner == 1) {
    for (std::size_t o = 0; o < outer; ++o) {
      const T* row = v.data() + o * len;
      T* dst = out.data() + o * len;
      const T mx = *std::max_element(row, row + len);
      T total = 0;
      for (std::size_t l = 0; l < len; ++l) {
        dst[l] = std::exp(row[l] - mx);
        total += dst[l];
      }
      const T inv = T{1} / total;
      for (std::size_t l = 0; l < len; ++l) dst[l] *= inv;
    }
  } else {
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < len; ++l) mx = std::max(mx, v[base + l * inner]);
      T total = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const T e = std::exp(v[base + l * inner] - mx);
        out[base + l * inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] /= total;
    }
  }
  }
  auto r = make_node<T>(s, std::move(out), "softmax", {&x});
  if (r->requires_grad) {
    r->backward = [outer, inner, len](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      const auto& y = self.data;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * len * inner + in;
          T dot = 0;
          for (std::size_t l = 0; l < len; ++l) dot += self.grad[base + l * inner] * y[base + l * inner];
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t i = base + l * inner;
            g[i] += y[i] * (self.grad[i] - dot);
          }
        }
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> layer_norm(const basic_tensor<T>& x, const basic_tensor<T>& gain,
                           const basic_tensor<T>& bias, T eps) {
  if (x.rank() == 0) throw dimension_error("layer_norm: scalar input");
  if (!(eps > 0)) throw parameter_error("layer_norm: eps must be positive");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  if (gain.shape() != shape_t{n} || bias.shape() != shape_t{n}) {
    throw dimension_error("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                          shape_string(bias.shape()) + " do not match last axis of " +
                          shape_string(x.shape()));
  }
  const auto& v = x.node()->data;
  const auto& gv = gain.node()->data;
  const auto& bv = bias.node()->data;
  std::vector<T> out(v.size()), xhat(v.size()), rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = v.data() + r * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(n);
    rstd[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t i = r * n + j;
      xhat[i] = (row[j] - mean) * rstd[r];
      out[i] = xhat[i] * gv[j] + bv[j];
    }
  }
  auto r = make_node<T>(x.shape(), std::move(out), "layer_norm", {&x, &gain, &bias});
  if (r->requires_grad) {
    r->backward = [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](detail::tensor_node<T>& self) {
      auto& X = *self.inputs[0];
      auto& G = *self.inputs[1];
      auto& B = *self.inputs[2];
      const auto& gy = self.grad;
      for (std::size_t r = 0; r < rows; ++r) {
        T mean_d = 0, mean_dx = 0;
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = r * n + j;
          const T d = gy[i] * G.data[j];
          mean_d += d;
          mean_dx += d * xhat[i];
          if (G.requires_grad) G.grad[j] += gy[i] * xhat[i];
          if (B.requires_grad) B.grad[j] += gy[i];
        }
        if (!X.requires_grad) continue;
        mean_d /= static_cast<T>(n);
        mean_dx /= static_cast<T>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = r * n + j;
          X.grad[i] += rstd[r] * (gy[i] * G.data[j] - mean_d - xhat[i] * mean_dx);
        }
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> dropout(const basic_tensor<T>& x, double rate, std::uint64_t seed, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw parameter_error("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = to_unit(mix64(seed ^ mix64(i + 1))) < rate ? T{0} : keep_scale;
  }
  std::vector<T> out(x.size());
  const auto& v = x.node()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  auto r = make_node<T>(x.shape(), std::move(out), "dropout", {&x});
  if (r->requires_grad) {
    r->backward = [mask = std::move(mask)](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> cross_entropy(const basic_tensor<T>& logits, std::span<const int> labels) {
  require_rank("cross_entropy", logits.shape(), 2);
  const std::size_t batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != batch) {
    throw dimension_error("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(batch) + " rows");
  }
  if (batch == 0) throw dimension_error("cross_entropy: empty batch");
  const auto& v = logits.node()->data;
  std::vector<T> probs(v.size());
  T loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const int label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw data_error("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    const T* row = v.data() + b * k;
    const T mx = *std::max_element(row, row + k);
    T total = 0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[b * k + j] = std::exp(row[j] - mx);
      total += probs[b * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] /= total;
    loss += std::log(total) + mx - row[label];
  }
  loss /= static_cast<T>(batch);
  auto r = make_node<T>({}, {loss}, "cross_entropy", {&logits});
  if (r->requires_grad) {
    std::vector<int> owned(labels.begin(), labels.end());
    r->backward = [batch, k, probs = std::move(probs), owned = std::move(owned)](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      const T scale_by = self.grad[0] / static_cast<T>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < k; ++j) {
          const T onehot = static_cast<std::size_t>(owned[b]) == j ? T{1} : T{0};
          g[b * k + j] += scale_by * (probs[b * k + j] - onehot);
        }
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> sum(const basic_tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  auto r = make_node<T>({}, {total}, "sum", {&x});
  if (r->requires_grad) {
    r->backward = [](detail::tensor_node<T>& self) {
      for (auto& g : self.inputs[0]->grad) g += self.grad[0];
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> mean_rows(const basic_tensor<T>& x) {
  require_rank("mean_rows", x.shape(), 2);
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (m == 0) throw dimension_error("mean_rows: no rows");
  std::vector<T> out(n, T{0});
  const auto& v = x.node()->data;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += v[i * n + j];
  for (auto& o : out) o /= static_cast<T>(m);
  auto r = make_node<T>({n}, std::move(out), "mean_rows", {&x});
  if (r->requires_grad) {
    r->backward = [m, n](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] / static_cast<T>(m);
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> slice_rows(const basic_tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank("slice_rows", x.shape(), 2);
  const std::size_t n = x.dim(1);
  if (begin > end || end > x.dim(0)) {
    throw dimension_error("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                          ") out of range for " + shape_string(x.shape()));
  }
  const auto& v = x.node()->data;
  std::vector<T> out(v.begin() + begin * n, v.begin() + end * n);
  auto r = make_node<T>({end - begin, n}, std::move(out), "slice_rows", {&x});
  if (r->requires_grad) {
    r->backward = [begin, n](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> slice_cols(const basic_tensor<T>& x, std::size_t begin, std::size_t end) {
  require_rank("slice_cols", x.shape(), 2);
  const std::size_t m = x.dim(0), n = x.dim(1), w = end - begin;
  if (begin > end || end > n) {
    throw dimension_error("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(end) +
                          ") out of range for " + shape_string(x.shape()));
  }
  const auto& v = x.node()->data;
  std::vector<T> out(m * w);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(v.begin() + i * n + begin, w, out.begin() + i * w);
  auto r = make_node<T>({m, w}, std::move(out), "slice_cols", {&x});
  if (r->requires_grad) {
    r->backward = [m, n, w, begin](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> concat(const std::vector<basic_tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw dimension_error("concat: no parts");
  if (axis > 1) throw dimension_error("concat: axis must be 0 or 1");
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  for (const auto& p : parts) dims.push_back(as_matrix(p.shape()));
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = dims[0].second;
    for (auto [m, n] : dims) {
      if (n != cols) throw dimension_error("concat: column counts differ along axis 0");
      rows += m;
    }
  } else {
    rows = dims[0].first;
    for (auto [m, n] : dims) {
      if (m != rows) throw dimension_error("concat: row counts differ along axis 1");
      cols += n;
    }
  }
  std::vector<T> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    offsets.push_back(offset);
    const auto& v = parts[p].node()->data;
    const auto [m, n] = dims[p];
    if (axis == 0) {
      std::copy(v.begin(), v.end(), out.begin() + offset * cols);
      offset += m;
    } else {
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(v.begin() + i * n, n, out.begin() + i * cols + offset);
      offset += n;
    }
  }
  auto r = std::make_shared<detail::tensor_node<T>>();
  r->shape = {rows, cols};
  r->data = std::move(out);
  r->op = "concat";
  if (grad_mode_enabled()) {
    for (const auto& p : parts) r->requires_grad = r->requires_grad || p.requires_grad();
  }
  if (r->requires_grad) {
    for (const auto& p : parts) r->inputs.push_back(p.node());
    r->backward = [axis, cols, dims, offsets](detail::tensor_node<T>& self) {
      for (std::size_t p = 0; p < self.inputs.size(); ++p) {
        auto& in = *self.inputs[p];
        if (!in.requires_grad) continue;
        const auto [m, n] = dims[p];
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t src = axis == 0 ? (offsets[p] + i) * cols + j : i * cols + offsets[p] + j;
            in.grad[i * n + j] += self.grad[src];
          }
        }
      }
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> reshape(const basic_tensor<T>& x, shape_t shape) {
  if (shape_size(shape) != x.size()) {
    throw dimension_error("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  auto r = make_node<T>(std::move(shape), x.node()->data, "reshape", {&x});
  if (r->requires_grad) {
    r->backward = [](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return basic_tensor<T>(std::move(r));
}

template <typename T>
basic_tensor<T> gather(const basic_tensor<T>& x, std::vector<std::size_t> index, shape_t shape) {
  if (shape_size(shape) != index.size()) {
    throw dimension_error("gather: " + std::to_string(index.size()) + " indices for shape " + shape_string(shape));
  }
  const auto& src = x.node()->data;
  std::vector<T> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= src.size()) {
      throw dimension_error("gather: index " + std::to_string(index[i]) + " outside " + shape_string(x.shape()));
    }
    out[i] = src[index[i]];
  }
  auto r = make_node<T>(std::move(shape), std::move(out), "gather", {&x});
  if (r->requires_grad) {
    r->backward = [index = std::move(index)](detail::tensor_node<T>& self) {
      auto& g = self.inputs[0]->grad;
      for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
    };
  }
  return basic_tensor<T>(std::move(r));
}

#define PATHVIT_INSTANTIATE_OPS(T)                                                              \
  template basic_tensor<T> matmul(const basic_tensor<T>&, const basic_tensor<T>&);              \
  template basic_tensor<T> transpose(const basic_tensor<T>&);                                   \
  template basic_tensor<T> add(const basic_tensor<T>&, const basic_tensor<T>&);                 \
  template basic_tensor<T> mul(const basic_tensor<T>&, const basic_tensor<T>&);                 \
  template basic_tensor<T> scale(const basic_tensor<T>&, T);                                    \
  template basic_tensor<T> add_bias(const basic_tensor<T>&, const basic_tensor<T>&);            \
  template basic_tensor<T> silu(const basic_tensor<T>&);                                        \
  template basic_tensor<T> softmax(const basic_tensor<T>&, std::size_t);                        \
  template basic_tensor<T> layer_norm(const basic_tensor<T>&, const basic_tensor<T>&,           \
                                      const basic_tensor<T>&, T);                               \
  template basic_tensor<T> dropout(const basic_tensor<T>&, double, std::uint64_t, bool);        \
  template basic_tensor<T> cross_entropy(const basic_tensor<T>&, std::span<const int>);         \
  template basic_tensor<T> sum(const basic_tensor<T>&);                                         \
  template basic_tensor<T> mean_rows(const basic_tensor<T>&);                                   \
  template basic_tensor<T> slice_rows(const basic_tensor<T>&, std::size_t, std::size_t);        \
  template basic_tensor<T> slice_cols(const basic_tensor<T>&, std::size_t, std::size_t);        \
  template basic_tensor<T> concat(const std::vector<basic_tensor<T>>&, std::size_t);            \
  template basic_tensor<T> reshape(const basic_tensor<T>&, shape_t);                            \
  template basic_tensor<T> gather(const basic_tensor<T>&, std::vector<std::size_t>, shape_t);

PATHVIT_INSTANTIATE_OPS(float)
PATHVIT_INSTANTIATE_OPS(double)

#undef PATHVIT_INSTANTIATE_OPS

}  // namespace pathvit
