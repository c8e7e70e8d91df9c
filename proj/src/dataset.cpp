#include "pathvit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pathvit/errors.hpp"
#include "pathvit/rng.hpp"

namespace pathvit {

using json = nlohmann::json;

std::string class_code(int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= class_count) {
    throw data_error("class index " + std::to_string(index) + " outside [0, 9)");
  }
  return std::string(class_codes[static_cast<std::size_t>(index)]);
}

int class_index(std::string_view code) {
  auto it = std::find(class_codes.begin(), class_codes.end(), code);
  if (it == class_codes.end()) throw data_error("unknown class code '" + std::string(code) + "'");
  return static_cast<int>(it - class_codes.begin());
}

std::vector<std::string> class_names() { return {class_codes.begin(), class_codes.end()}; }

std::array<std::size_t, class_count> dataset_manifest::class_counts() const {
  std::array<std::size_t, class_count> out{};
  for (const auto& e : entries) ++out.at(static_cast<std::size_t>(e.label));
  return out;
}

void write_manifest(const dataset_manifest& m) {
  json j;
  j["format"] = "pathvit-dataset 1";
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["image_size"] = m.image_size ? json(*m.image_size) : json(nullptr);
  j["classes"] = class_names();
  const auto counts = m.class_counts();
  j["counts"] = std::vector<std::size_t>(counts.begin(), counts.end());
  j["entries"] = json::array();
  for (const auto& e : m.entries) j["entries"].push_back({{"path", e.path}, {"label", class_code(e.label)}});
  const auto path = m.root / "manifest.json";
  const auto tmp = m.root / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

dataset_manifest read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw parse_error(path.string() + ": " + e.what(), e.byte);
  }
  dataset_manifest m;
  m.root = root;
  try {
    if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("image_size") && !j["image_size"].is_null()) m.image_size = j["image_size"].get<std::size_t>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("path").get<std::string>(), class_index(e.at("label").get<std::string>())});
    }
  } catch (const json::exception& e) {
    throw parse_error(path.string() + ": " + e.what());
  }
  return m;
}

dataset load_dataset(const dataset_manifest& m) {
  dataset out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    const auto p = m.root / e.path;
    if (!std::filesystem::exists(p)) throw io_error("dataset entry missing: " + p.string());
    out.push_back({load_ppm(p), e.label, e.path});
  }
  return out;
}

dataset load_dataset(const std::filesystem::path& root) { return load_dataset(read_manifest(root)); }

namespace {

struct texture_family {
  std::array<double, 3> base;  // RGB
  double blobs_per_kpx;        // dark nuclei-like blobs per 1000 pixels
  double blob_radius;          // fraction of image size
  double stripe_cycles;        // cycles across the image
};

// Distinct hue, blob density and stripe frequency per class.
constexpr std::array<texture_family, class_count> families = {{
    {{150, 60, 160}, 4.0, 0.030, 0.0},   // CT: dense purple cellularity
    {{215, 120, 170}, 1.0, 0.020, 6.0},  // PN: pink with palisading stripes
    {{190, 50, 70}, 0.5, 0.060, 2.0},    // MP: red vascular
    {{235, 190, 205}, 0.2, 0.015, 0.0},  // NC: pale necrosis
    {{120, 110, 200}, 2.0, 0.020, 10.0}, // IC: blue-violet, fine stripes
    {{225, 225, 235}, 0.6, 0.015, 3.0},  // WM: near-white
    {{100, 170, 140}, 2.5, 0.025, 4.0},  // LI: green-teal
    {{200, 160, 80}, 3.0, 0.045, 0.0},   // DM: ochre, large blobs
    {{60, 60, 120}, 6.0, 0.018, 0.0},    // PL: dark navy, many small blobs
}};

}  // namespace

image_patch render_texture(int label, std::uint64_t seed, std::size_t size) {
  if (size == 0) throw parameter_error("render_texture: size must be positive");
  const auto& fam = families.at(static_cast<std::size_t>(label));
  rng gen(seed);
  const double n = static_cast<double>(size);

  std::array<double, 3> base;
  for (std::size_t c = 0; c < 3; ++c) base[c] = std::clamp(fam.base[c] + gen.normal(0.0, 8.0), 0.0, 255.0);
  const double angle = gen.uniform(0.0, std::numbers::pi);
  const double phase = gen.uniform(0.0, 2.0 * std::numbers::pi);
  const double cycles = fam.stripe_cycles * gen.uniform(0.85, 1.15);

  struct blob {
    double x, y, r, depth;
  };
  std::vector<blob> blobs;
  const auto blob_count = static_cast<std::size_t>(std::lround(fam.blobs_per_kpx * n * n / 1000.0 * gen.uniform(0.8, 1.2)));
  for (std::size_t i = 0; i < blob_count; ++i) {
    blobs.push_back({gen.uniform(0.0, n), gen.uniform(0.0, n), std::max(1.0, fam.blob_radius * n * gen.uniform(0.7, 1.3)),
                     gen.uniform(0.35, 0.6)});
  }

  std::vector<double> shade(size * size, 1.0);
  if (cycles > 0) {
    const double kx = std::cos(angle) * 2.0 * std::numbers::pi * cycles / n;
    const double ky = std::sin(angle) * 2.0 * std::numbers::pi * cycles / n;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        shade[y * size + x] = 1.0 + 0.18 * std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
  }
  for (const auto& b : blobs) {
    const auto y_lo = static_cast<std::ptrdiff_t>(std::floor(b.y - b.r));
    const auto y_hi = static_cast<std::ptrdiff_t>(std::ceil(b.y + b.r));
    const auto x_lo = static_cast<std::ptrdiff_t>(std::floor(b.x - b.r));
    const auto x_hi = static_cast<std::ptrdiff_t>(std::ceil(b.x + b.r));
    for (auto y = std::max<std::ptrdiff_t>(0, y_lo); y <= std::min<std::ptrdiff_t>(y_hi, static_cast<std::ptrdiff_t>(size) - 1); ++y) {
      for (auto x = std::max<std::ptrdiff_t>(0, x_lo); x <= std::min<std::ptrdiff_t>(x_hi, static_cast<std::ptrdiff_t>(size) - 1); ++x) {
        const double dx = static_cast<double>(x) + 0.5 - b.x, dy = static_cast<double>(y) + 0.5 - b.y;
        if (dx * dx + dy * dy <= b.r * b.r) shade[static_cast<std::size_t>(y) * size + static_cast<std::size_t>(x)] *= b.depth;
      }
    }
  }

  image_patch img = image_patch::blank(size, size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = base[c] * shade[y * size + x] + gen.normal(0.0, 6.0);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

namespace {

void check_counts(std::span<const std::size_t> counts) {
  if (counts.size() != class_count) {
    throw parameter_error("expected " + std::to_string(class_count) + " class counts, got " +
                          std::to_string(counts.size()));
  }
}

std::string sequence_name(std::size_t i) {
  std::ostringstream s;
  s << std::setw(5) << std::setfill('0') << i << ".ppm";
  return s.str();
}

}  // namespace

dataset synthesize(std::span<const std::size_t> counts, std::uint64_t seed, std::size_t size) {
  check_counts(counts);
  dataset out;
  for (std::size_t k = 0; k < class_count; ++k) {
    for (std::size_t i = 0; i < counts[k]; ++i) {
      const int label = static_cast<int>(k);
      out.push_back({render_texture(label, derive_seed({seed, k, i}), size), label,
                     class_code(label) + "/" + sequence_name(i)});
    }
  }
  return out;
}

dataset_manifest generate_synthetic(std::span<const std::size_t> counts, std::uint64_t seed, std::size_t size,
                                    const std::filesystem::path& root) {
  check_counts(counts);
  dataset_manifest m;
  m.root = root;
  m.seed = seed;
  m.image_size = size;
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw io_error("cannot create " + root.string() + ": " + ec.message());
  for (std::size_t k = 0; k < class_count; ++k) {
    if (counts[k] == 0) continue;
    const auto dir = root / std::string(class_codes[k]);
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < counts[k]; ++i) {
      const int label = static_cast<int>(k);
      const std::string rel = class_code(label) + "/" + sequence_name(i);
      save_ppm(render_texture(label, derive_seed({seed, k, i}), size), root / rel);
      m.entries.push_back({rel, label});
    }
  }
  write_manifest(m);
  return m;
}

}  // namespace pathvit
