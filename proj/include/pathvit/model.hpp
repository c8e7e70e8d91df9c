#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pathvit/encoder.hpp"
#include "pathvit/head.hpp"

namespace pathvit {

// Encoder plus aggregation head: image -> 9 logits.
template <typename T>
struct model {
  encoder_config encoder_cfg;
  head_config head_cfg;
  encoder_weights<T> encoder;
  head_weights<T> head;

  static model init(const encoder_config& ecfg, const head_config& hcfg, std::uint64_t seed);

  // Preprocessed images [3 x S x S] -> logits [B x K].
  basic_tensor<T> forward(std::span<const basic_tensor<T>> images, run_mode mode,
                          std::uint64_t dropout_seed) const;

  std::vector<named_tensor<T>> parameters() const;
  void set_encoder_trainable(bool on);
};

// Flat checkpoint: a plain-text manifest of (name, shape, byte offset)
// terminated by a "---" line, followed by little-endian float32 values.
void save_checkpoint(const model<float>& m, const std::filesystem::path& path);
model<float> load_checkpoint(const std::filesystem::path& path);

template <typename To, typename From>
model<To> cast_model(const model<From>& m, bool requires_grad);

}  // namespace pathvit
