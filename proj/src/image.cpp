#include "pathvit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "pathvit/errors.hpp"

namespace pathvit {

image_patch image_patch::blank(std::size_t width, std::size_t height) {
  return {width, height, std::vector<std::uint8_t>(width * height * 3, 0)};
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Skips whitespace and '#' comments, then reads a decimal field.
std::size_t read_header_number(std::string_view bytes, std::size_t& pos, const char* what,
                               std::size_t* field_start = nullptr) {
  while (pos < bytes.size()) {
    if (is_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size()) throw parse_error(std::string("ppm: truncated before ") + what, pos);
  if (bytes[pos] < '0' || bytes[pos] > '9') throw parse_error(std::string("ppm: expected ") + what, pos);
  if (field_start) *field_start = pos;
  std::size_t v = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
    if (v > (1u << 24)) throw parse_error(std::string("ppm: ") + what + " too large", pos);
    ++pos;
  }
  return v;
}

}  // namespace

image_patch decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw parse_error("ppm: bad magic, expected P6", 0);
  std::size_t pos = 2;
  const std::size_t width = read_header_number(bytes, pos, "width");
  const std::size_t height = read_header_number(bytes, pos, "height");
  std::size_t start_maxval = 0;
  const std::size_t maxval = read_header_number(bytes, pos, "maxval", &start_maxval);
  if (maxval != 255) throw parse_error("ppm: unsupported maxval " + std::to_string(maxval), start_maxval);
  if (width == 0 || height == 0) throw parse_error("ppm: zero image dimension", pos);
  if (pos >= bytes.size() || !is_space(bytes[pos])) throw parse_error("ppm: missing separator after header", pos);
  ++pos;
  const std::size_t need = width * height * 3;
  if (bytes.size() - pos < need) {
    throw parse_error("ppm: truncated pixel data, need " + std::to_string(need) + " bytes", bytes.size());
  }
  image_patch img{width, height, {}};
  img.pixels.assign(reinterpret_cast<const std::uint8_t*>(bytes.data() + pos),
                    reinterpret_cast<const std::uint8_t*>(bytes.data() + pos + need));
  return img;
}

std::string encode_ppm(const image_patch& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

image_patch load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("ppm: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const parse_error& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
}

void save_ppm(const image_patch& img, const std::filesystem::path& path) {
  if (img.width == 0 || img.height == 0 || img.pixels.size() != img.width * img.height * 3) {
    throw dimension_error("ppm: inconsistent image dimensions");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("ppm: cannot open " + path.string() + " for writing");
  const auto bytes = encode_ppm(img);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw io_error("ppm: write failed for " + path.string());
}

image_patch resize_bilinear(const image_patch& img, std::size_t width, std::size_t height) {
  if (img.width == 0 || img.height == 0) throw dimension_error("resize: empty source image");
  if (img.width == width && img.height == height) return img;
  image_patch out = image_patch::blank(width, height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bottom = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        const double v = top * (1.0 - wy) + bottom * wy;
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

tensor to_tensor(const image_patch& img) {
  if (img.width != model_image_size || img.height != model_image_size) {
    throw dimension_error("to_tensor: expected " + std::to_string(model_image_size) + "x" +
                          std::to_string(model_image_size) + " image, got " + std::to_string(img.width) +
                          "x" + std::to_string(img.height));
  }
  const std::size_t h = img.height, w = img.width;
  std::vector<float> v(3 * h * w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) v[(c * h + y) * w + x] = static_cast<float>(img.at(y, x, c)) / 255.0f;
  return tensor::from({3, h, w}, std::move(v));
}

namespace {

tensor per_channel(const tensor& t, const normalization_stats& stats, bool forward) {
  if (t.rank() != 3 || t.dim(0) != 3) {
    throw dimension_error("normalize: expected a 3-channel [C x H x W] tensor, got " + shape_string(t.shape()));
  }
  for (double s : stats.std) {
    if (!(s > 0)) throw parameter_error("normalize: std entries must be positive");
  }
  const std::size_t plane = t.dim(1) * t.dim(2);
  std::vector<float> v(t.data().begin(), t.data().end());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto mean = static_cast<float>(stats.mean[c]);
    const auto sd = static_cast<float>(stats.std[c]);
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) v[i] = forward ? (v[i] - mean) / sd : v[i] * sd + mean;
  }
  return tensor::from(t.shape(), std::move(v));
}

}  // namespace

tensor normalize(const tensor& t, const normalization_stats& stats) { return per_channel(t, stats, true); }

tensor denormalize(const tensor& t, const normalization_stats& stats) { return per_channel(t, stats, false); }

tensor preprocess(const image_patch& img, const normalization_stats& stats) {
  return normalize(to_tensor(resize_bilinear(img, model_image_size, model_image_size)), stats);
}

}  // namespace pathvit
