#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "pathvit/tensor.hpp"

namespace pathvit {

// 8-bit RGB, row-major, interleaved.
struct image_patch {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  static image_patch blank(std::size_t width, std::size_t height);
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool operator==(const image_patch&) const = default;
};

struct normalization_stats {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

inline constexpr std::size_t model_image_size = 224;

// Binary P6 with maxval 255 only.
image_patch decode_ppm(std::string_view bytes);
std::string encode_ppm(const image_patch& img);
image_patch load_ppm(const std::filesystem::path& path);
void save_ppm(const image_patch& img, const std::filesystem::path& path);

// Bilinear with half-pixel centers and edge clamping, rounded to nearest.
image_patch resize_bilinear(const image_patch& img, std::size_t width, std::size_t height);

// [3 x H x W] in [0, 1]; the image must already be model_image_size square.
tensor to_tensor(const image_patch& img);
tensor normalize(const tensor& t, const normalization_stats& stats = {});
tensor denormalize(const tensor& t, const normalization_stats& stats = {});

// resize_bilinear -> to_tensor -> normalize.
tensor preprocess(const image_patch& img, const normalization_stats& stats = {});

}  // namespace pathvit
