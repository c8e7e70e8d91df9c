#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathvit/cv.hpp"

namespace pathvit {

// Flat key list accepted in config files, e.g. {"epochs": 5, "embed_dim": 8}.
std::vector<std::string> config_keys();

nlohmann::json config_to_json(const experiment_config& cfg);

// Applies the keys present in `j` on top of `base`. Unknown keys and wrong
// value types raise config_error.
experiment_config config_from_json(const nlohmann::json& j, experiment_config base = {});

// Reads a JSON config file; parse failures raise parse_error.
experiment_config load_config(const std::filesystem::path& path, experiment_config base = {});

// Metric table with metric rows and one column per class plus "Average".
// Per-class MCC cells print "--".
void write_class_table(std::ostream& out, std::span<const metric_bundle> per_class, const metric_bundle& average,
                       std::span<const std::string> class_names);

// Writes `contents` to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

struct gen_data_options {
  std::filesystem::path out;
  std::array<std::size_t, class_count> counts = default_class_counts;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  bool force = false;
};

// Refuses a non-empty `out` without force. Prints a per-class table to `log`.
dataset_manifest run_gen_data(const gen_data_options& opt, std::ostream& log);

struct cv_run_options {
  std::filesystem::path data;
  std::filesystem::path out;
  experiment_config config;
  std::size_t jobs = 1;
  // Run directory name; a timestamp when empty.
  std::string run_name;
  bool verbose = false;
};

struct cv_run_outputs {
  std::filesystem::path run_dir;
  std::filesystem::path manifest;
  cv_result result;
};

// Runs cross-validation and writes, inside out/<run>/:
//   run.json                   run manifest
//   fold_<f>.ckpt, fold_<f>.csv
//   average.csv                per-class fold averages plus the averaged micro row
//   table.txt                  class-wise table
//   confusion.txt, confusion_normalized.txt
// Everything is staged in a hidden directory and renamed into place, then
// out/latest is pointed at it.
cv_run_outputs run_cv(const cv_run_options& opt, std::ostream& log);

struct eval_options {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
};

// Single eval-mode pass over the whole dataset. Writes metrics.csv,
// confusion.txt and confusion_normalized.txt into `out`.
class_report run_eval(const eval_options& opt, std::ostream& log);

// Prints the class-wise table and both confusion grids stored in run.json.
// Throws parse_error on malformed manifests.
void run_report(const std::filesystem::path& manifest, std::ostream& out);

}  // namespace pathvit
