#include "pathvit/encoder.hpp"

#include <cmath>

#include "pathvit/ops.hpp"
#include "pathvit/rng.hpp"

namespace pathvit {

void encoder_config::validate() const {
  if (image_size == 0 || tile_size == 0 || image_size % tile_size != 0) {
    throw config_error("encoder: image_size " + std::to_string(image_size) +
                       " is not divisible by tile_size " + std::to_string(tile_size));
  }
  if (channels == 0 || embed_dim == 0 || mlp_ratio == 0) {
    throw config_error("encoder: channels, embed_dim and mlp_ratio must be positive");
  }
  if (heads == 0 || embed_dim % heads != 0) {
    throw config_error("encoder: embed_dim " + std::to_string(embed_dim) +
                       " is not divisible by heads " + std::to_string(heads));
  }
}

namespace {

constexpr double init_std = 0.02;

template <typename T>
basic_tensor<T> normal_param(shape_t shape, rng* gen) {
  std::vector<T> v(shape_size(shape), T{0});
  if (gen) {
    for (auto& x : v) x = static_cast<T>(gen->normal(0.0, init_std));
  }
  return basic_tensor<T>::from(std::move(shape), std::move(v), true);
}

template <typename T>
basic_tensor<T> constant_param(shape_t shape, T value) {
  return basic_tensor<T>::full(std::move(shape), value, true);
}

template <typename T>
encoder_weights<T> build(const encoder_config& cfg, rng* gen) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim, hidden = d * cfg.mlp_ratio;
  encoder_weights<T> w;
  w.tile_projection = normal_param<T>({cfg.tile_dim(), d}, gen);
  w.position = normal_param<T>({cfg.sequence_length(), d}, gen);
  w.class_seed = normal_param<T>({1, d}, gen);
  w.register_seeds = normal_param<T>({cfg.registers, d}, gen);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    block_weights<T> b;
    b.norm1_gain = constant_param<T>({d}, T{1});
    b.norm1_bias = constant_param<T>({d}, T{0});
    b.query = normal_param<T>({d, d}, gen);
    b.query_bias = constant_param<T>({d}, T{0});
    b.key = normal_param<T>({d, d}, gen);
    b.key_bias = constant_param<T>({d}, T{0});
    b.value = normal_param<T>({d, d}, gen);
    b.value_bias = constant_param<T>({d}, T{0});
    b.out = normal_param<T>({d, d}, gen);
    b.out_bias = constant_param<T>({d}, T{0});
    b.norm2_gain = constant_param<T>({d}, T{1});
    b.norm2_bias = constant_param<T>({d}, T{0});
    b.mlp_in = normal_param<T>({d, hidden}, gen);
    b.mlp_in_bias = constant_param<T>({hidden}, T{0});
    b.mlp_out = normal_param<T>({hidden, d}, gen);
    b.mlp_out_bias = constant_param<T>({d}, T{0});
    w.blocks.push_back(std::move(b));
  }
  w.final_gain = constant_param<T>({d}, T{1});
  w.final_bias = constant_param<T>({d}, T{0});
  return w;
}

}  // namespace

template <typename T>
encoder_weights<T> encoder_weights<T>::init(const encoder_config& cfg, std::uint64_t seed) {
  rng gen(seed);
  return build<T>(cfg, &gen);
}

template <typename T>
encoder_weights<T> encoder_weights<T>::zeros(const encoder_config& cfg) {
  return build<T>(cfg, nullptr);
}

template <typename T>
basic_tensor<T> tile_image(const basic_tensor<T>& image, const encoder_config& cfg) {
  cfg.validate();
  const shape_t expected{cfg.channels, cfg.image_size, cfg.image_size};
  if (image.shape() != expected) {
    throw dimension_error("tile_image: expected image " + shape_string(expected) + ", got " +
                          shape_string(image.shape()));
  }
  const std::size_t s = cfg.tile_size, g = cfg.grid(), hw = cfg.image_size;
  std::vector<std::size_t> index(cfg.patch_tokens() * cfg.tile_dim());
  std::size_t o = 0;
  for (std::size_t ty = 0; ty < g; ++ty) {
    for (std::size_t tx = 0; tx < g; ++tx) {
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        for (std::size_t y = 0; y < s; ++y) {
          const std::size_t row = (c * hw + ty * s + y) * hw + tx * s;
          for (std::size_t x = 0; x < s; ++x) index[o++] = row + x;
        }
      }
    }
  }
  return gather(image, std::move(index), {cfg.patch_tokens(), cfg.tile_dim()});
}

template <typename T>
basic_tensor<T> embed(const basic_tensor<T>& tiles, const encoder_weights<T>& w,
                      const encoder_config& cfg) {
  const shape_t expected{cfg.patch_tokens(), cfg.tile_dim()};
  if (tiles.shape() != expected) {
    throw dimension_error("embed: expected tiles " + shape_string(expected) + ", got " +
                          shape_string(tiles.shape()));
  }
  auto projected = matmul(tiles, w.tile_projection);
  auto sequence = cfg.registers > 0 ? concat<T>({w.class_seed, w.register_seeds, projected}, 0)
                                    : concat<T>({w.class_seed, projected}, 0);
  return add(sequence, w.position);
}

template <typename T>
basic_tensor<T> self_attention(const basic_tensor<T>& x, const block_weights<T>& w, std::size_t heads) {
  const std::size_t d = x.dim(1), head_dim = d / heads;
  const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(head_dim)));
  auto q = add_bias(matmul(x, w.query), w.query_bias);
  auto k = add_bias(matmul(x, w.key), w.key_bias);
  auto v = add_bias(matmul(x, w.value), w.value_bias);
  std::vector<basic_tensor<T>> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t lo = h * head_dim, hi = lo + head_dim;
    auto scores = matmul(scale(slice_cols(q, lo, hi), inv_sqrt), transpose(slice_cols(k, lo, hi)));
    per_head.push_back(matmul(softmax(scores, 1), slice_cols(v, lo, hi)));
  }
  auto merged = heads == 1 ? per_head.front() : concat(per_head, 1);
  return add_bias(matmul(merged, w.out), w.out_bias);
}

template <typename T>
token_set<T> encode_sequence(const basic_tensor<T>& sequence, const encoder_weights<T>& w,
                             const encoder_config& cfg) {
  auto x = sequence;
  for (const auto& b : w.blocks) {
    x = add(x, self_attention(layer_norm(x, b.norm1_gain, b.norm1_bias), b, cfg.heads));
    auto h = layer_norm(x, b.norm2_gain, b.norm2_bias);
    h = silu(add_bias(matmul(h, b.mlp_in), b.mlp_in_bias));
    x = add(x, add_bias(matmul(h, b.mlp_out), b.mlp_out_bias));
  }
  x = layer_norm(x, w.final_gain, w.final_bias);
  const std::size_t r = cfg.registers;
  return {slice_rows(x, 0, 1), slice_rows(x, 1, 1 + r), slice_rows(x, 1 + r, x.dim(0))};
}

template <typename T>
token_set<T> encode(const basic_tensor<T>& image, const encoder_weights<T>& w,
                    const encoder_config& cfg) {
  if (w.blocks.size() != cfg.depth) {
    throw dimension_error("encode: weights have " + std::to_string(w.blocks.size()) +
                          " blocks, config expects " + std::to_string(cfg.depth));
  }
  return encode_sequence(embed(tile_image(image, cfg), w, cfg), w, cfg);
}

template <typename To, typename From>
encoder_weights<To> cast_weights(const encoder_weights<From>& w, bool requires_grad) {
  encoder_weights<To> out;
  out.blocks.resize(w.blocks.size());
  auto src = w.parameters();
  std::size_t i = 0;
  out.visit([&](const std::string&, basic_tensor<To>& t) { t = cast<To>(src[i++].value, requires_grad); });
  return out;
}

template struct encoder_weights<float>;
template struct encoder_weights<double>;

#define PATHVIT_INSTANTIATE_ENCODER(T)                                                               \
  template basic_tensor<T> tile_image(const basic_tensor<T>&, const encoder_config&);               \
  template basic_tensor<T> embed(const basic_tensor<T>&, const encoder_weights<T>&,                 \
                                 const encoder_config&);                                            \
  template basic_tensor<T> self_attention(const basic_tensor<T>&, const block_weights<T>&, std::size_t); \
  template token_set<T> encode(const basic_tensor<T>&, const encoder_weights<T>&, const encoder_config&); \
  template token_set<T> encode_sequence(const basic_tensor<T>&, const encoder_weights<T>&,          \
                                        const encoder_config&);

PATHVIT_INSTANTIATE_ENCODER(float)
PATHVIT_INSTANTIATE_ENCODER(double)

template encoder_weights<double> cast_weights(const encoder_weights<float>&, bool);
template encoder_weights<float> cast_weights(const encoder_weights<double>&, bool);
template encoder_weights<float> cast_weights(const encoder_weights<float>&, bool);

}  // namespace pathvit
