#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pathvit/errors.hpp"
#include "pathvit/run.hpp"

using namespace pathvit;

namespace {

std::array<std::size_t, class_count> parse_counts(const std::string& text) {
  std::array<std::size_t, class_count> counts{};
  std::stringstream in(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(in, item, ',')) {
    if (n == class_count) throw parameter_error("--counts: expected 9 values");
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || item.find('-') != std::string::npos) {
      throw parameter_error("--counts: \"" + item + "\" is not a count");
    }
    counts[n++] = v;
  }
  if (n != class_count) throw parameter_error("--counts: expected 9 values, got " + std::to_string(n));
  return counts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Glioblastoma patch classification: synthetic data, cross-validation, evaluation, reports"};
  app.require_subcommand(1);

  gen_data_options gen;
  std::string counts_text;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic 9-class patch dataset");
  gen_cmd->add_option("--out", gen.out, "Dataset directory")->required();
  gen_cmd->add_option("--counts", counts_text, "Nine comma-separated per-class counts (CT,PN,MP,NC,IC,WM,LI,DM,PL)");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--size", gen.size, "Patch side length in pixels")->capture_default_str();
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  cv_run_options cv;
  std::string config_path;
  std::optional<std::uint64_t> cv_seed;
  std::optional<std::size_t> cv_epochs, cv_folds;
  bool freeze = false;
  auto* cv_cmd = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  cv_cmd->add_option("--data", cv.data, "Dataset directory containing manifest.json")->required();
  cv_cmd->add_option("--out", cv.out, "Parent directory for run directories")->required();
  cv_cmd->add_option("--config", config_path, "JSON file with flat config keys");
  cv_cmd->add_option("--seed", cv_seed, "Overrides the config seed");
  cv_cmd->add_option("--epochs", cv_epochs, "Overrides the config epoch count");
  cv_cmd->add_option("--folds", cv_folds, "Overrides the config fold count");
  cv_cmd->add_flag("--freeze-encoder", freeze, "Train the head only");
  cv_cmd->add_option("--jobs", cv.jobs, "Folds trained in parallel")->capture_default_str();
  cv_cmd->add_option("--name", cv.run_name, "Run directory name (default: timestamp)");
  cv_cmd->add_flag("-v,--verbose", cv.verbose, "Print per-epoch losses");

  eval_options ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory containing manifest.json")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();

  std::string manifest;
  auto* report_cmd = app.add_subcommand("report", "Summarize a cross-validation run");
  report_cmd->add_option("--manifest", manifest, "run.json of a cv run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(exit_code::usage);
  }

  try {
    if (*gen_cmd) {
      if (!counts_text.empty()) gen.counts = parse_counts(counts_text);
      run_gen_data(gen, std::cout);
    } else if (*cv_cmd) {
      if (!config_path.empty()) cv.config = load_config(config_path);
      if (cv_seed) cv.config.train.seed = *cv_seed;
      if (cv_epochs) cv.config.train.epochs = *cv_epochs;
      if (cv_folds) cv.config.train.folds = *cv_folds;
      if (freeze) cv.config.train.freeze_encoder = true;
      run_cv(cv, std::cout);
    } else if (*eval_cmd) {
      run_eval(ev, std::cout);
    } else if (*report_cmd) {
      run_report(manifest, std::cout);
    }
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(exit_code::data);
  }
  return 0;
}
