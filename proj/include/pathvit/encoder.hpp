#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

template <typename T>
struct named_tensor {
  std::string name;
  basic_tensor<T> value;
};

struct encoder_config {
  std::size_t image_size = 224;
  std::size_t tile_size = 14;
  std::size_t channels = 3;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t registers = 4;
  std::size_t mlp_ratio = 4;

  // Throws config_error on a tile size that does not divide the image or a
  // head count that does not divide the embedding.
  void validate() const;

  std::size_t grid() const { return image_size / tile_size; }
  std::size_t patch_tokens() const { return grid() * grid(); }
  std::size_t tile_dim() const { return tile_size * tile_size * channels; }
  // class + registers + patches
  std::size_t sequence_length() const { return 1 + registers + patch_tokens(); }

  bool operator==(const encoder_config&) const = default;
};

template <typename T>
struct block_weights {
  basic_tensor<T> norm1_gain, norm1_bias;
  basic_tensor<T> query, query_bias, key, key_bias, value, value_bias, out, out_bias;
  basic_tensor<T> norm2_gain, norm2_bias;
  basic_tensor<T> mlp_in, mlp_in_bias, mlp_out, mlp_out_bias;
};

template <typename T>
struct encoder_weights {
  basic_tensor<T> tile_projection;  // [tile_dim x D]
  basic_tensor<T> position;         // [(1 + R + T) x D]
  basic_tensor<T> class_seed;       // [1 x D]
  basic_tensor<T> register_seeds;   // [R x D]
  std::vector<block_weights<T>> blocks;
  basic_tensor<T> final_gain, final_bias;

  // Normal(0, 0.02) matrices and seeds, zero biases, unit norm gains.
  static encoder_weights init(const encoder_config& cfg, std::uint64_t seed);
  static encoder_weights zeros(const encoder_config& cfg);

  // Visits every parameter as (name, tensor&) in a stable order; names are
  // used as checkpoint keys.
  template <typename Fn>
  void visit(Fn&& fn) {
    fn("encoder.tile_projection", tile_projection);
    fn("encoder.position", position);
    fn("encoder.class_seed", class_seed);
    fn("encoder.register_seeds", register_seeds);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "encoder.block" + std::to_string(i) + ".";
      auto& b = blocks[i];
      fn(p + "norm1.gain", b.norm1_gain);
      fn(p + "norm1.bias", b.norm1_bias);
      fn(p + "attn.query", b.query);
      fn(p + "attn.query_bias", b.query_bias);
      fn(p + "attn.key", b.key);
      fn(p + "attn.key_bias", b.key_bias);
      fn(p + "attn.value", b.value);
      fn(p + "attn.value_bias", b.value_bias);
      fn(p + "attn.out", b.out);
      fn(p + "attn.out_bias", b.out_bias);
      fn(p + "norm2.gain", b.norm2_gain);
      fn(p + "norm2.bias", b.norm2_bias);
      fn(p + "mlp.in", b.mlp_in);
      fn(p + "mlp.in_bias", b.mlp_in_bias);
      fn(p + "mlp.out", b.mlp_out);
      fn(p + "mlp.out_bias", b.mlp_out_bias);
    }
    fn("encoder.final_norm.gain", final_gain);
    fn("encoder.final_norm.bias", final_bias);
  }

  std::vector<named_tensor<T>> parameters() const {
    std::vector<named_tensor<T>> out;
    const_cast<encoder_weights*>(this)->visit(
        [&](const std::string& name, basic_tensor<T>& t) { out.push_back({name, t}); });
    return out;
  }
};

// Encoder output split back into its three token groups.
template <typename T>
struct token_set {
  basic_tensor<T> class_token;  // [1 x D]
  basic_tensor<T> registers;    // [R x D]
  basic_tensor<T> patches;      // [T x D]
};

// [C x H x W] image -> [T x tile_size^2 * C]. Row t holds tile t in row-major
// tile order, flattened channel-major then row-major inside the tile.
template <typename T>
basic_tensor<T> tile_image(const basic_tensor<T>& image, const encoder_config& cfg);

// Token sequence [class; registers; tile projections] plus position embeddings.
template <typename T>
basic_tensor<T> embed(const basic_tensor<T>& tiles, const encoder_weights<T>& w,
                      const encoder_config& cfg);

// Pre-norm multi-head self-attention over an [N x D] sequence.
template <typename T>
basic_tensor<T> self_attention(const basic_tensor<T>& x, const block_weights<T>& w, std::size_t heads);

// `depth` pre-norm transformer blocks and a final layer norm. The encoder has
// no stochastic layers, so train and eval forward passes coincide.
template <typename T>
token_set<T> encode(const basic_tensor<T>& image, const encoder_weights<T>& w,
                    const encoder_config& cfg);

// Same as encode(), starting from an already embedded sequence.
template <typename T>
token_set<T> encode_sequence(const basic_tensor<T>& sequence, const encoder_weights<T>& w,
                             const encoder_config& cfg);

template <typename To, typename From>
encoder_weights<To> cast_weights(const encoder_weights<From>& w, bool requires_grad);

}  // namespace pathvit
