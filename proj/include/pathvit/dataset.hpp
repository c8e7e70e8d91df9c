#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathvit/image.hpp"

namespace pathvit {

inline constexpr std::size_t class_count = 9;

// Index order follows the histological category list: cellular tumor,
// pseudopalisading necrosis, microvascular proliferation, geographic
// necrosis, cortex infiltration, white matter, leptomeningeal infiltration,
// dense macrophages, lymphocytes.
inline constexpr std::array<std::string_view, class_count> class_codes = {"CT", "PN", "MP", "NC", "IC",
                                                                         "WM", "LI", "DM", "PL"};

std::string class_code(int index);
// Throws data_error for an unknown code.
int class_index(std::string_view code);
std::vector<std::string> class_names();

// Invented long-tailed profile: CT/NC head, LI/DM/PL tail.
inline constexpr std::array<std::size_t, class_count> default_class_counts = {600, 150, 100, 450, 250,
                                                                             200, 40,  25,  15};

struct manifest_entry {
  std::string path;  // relative to the dataset root
  int label = 0;
  bool operator==(const manifest_entry&) const = default;
};

struct dataset_manifest {
  std::filesystem::path root;
  std::vector<manifest_entry> entries;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> image_size;

  std::array<std::size_t, class_count> class_counts() const;
};

// manifest.json inside `root`.
void write_manifest(const dataset_manifest& m);
dataset_manifest read_manifest(const std::filesystem::path& root);

struct sample {
  image_patch image;
  int label = 0;
  std::string path;
};
using dataset = std::vector<sample>;

// Reads every listed file; throws data_error naming the first bad entry.
dataset load_dataset(const dataset_manifest& m);
dataset load_dataset(const std::filesystem::path& root);

// One class-specific texture: base hue, blob density and stripe frequency,
// jittered by the seed.
image_patch render_texture(int label, std::uint64_t seed, std::size_t size);

// In-memory version of generate_synthetic (no files).
dataset synthesize(std::span<const std::size_t> counts, std::uint64_t seed, std::size_t size);

// Writes root/<code>/<seq>.ppm and root/manifest.json.
dataset_manifest generate_synthetic(std::span<const std::size_t> counts, std::uint64_t seed, std::size_t size,
                                    const std::filesystem::path& root);

}  // namespace pathvit
