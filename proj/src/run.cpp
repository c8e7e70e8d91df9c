#include "pathvit/run.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "pathvit/errors.hpp"

namespace pathvit {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::size_t get_size(const json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw config_error("config: " + key + " must be a non-negative integer");
  return v.get<std::size_t>();
}

double get_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw config_error("config: " + key + " must be a number");
  return v.get<double>();
}

bool get_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw config_error("config: " + key + " must be true or false");
  return v.get<bool>();
}

std::string timestamp_utc(std::chrono::system_clock::time_point t, const char* fmt) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::strftime(buf, sizeof buf, fmt, &tm);
  return buf;
}

std::string iso_now() { return timestamp_utc(std::chrono::system_clock::now(), "%Y-%m-%dT%H:%M:%SZ"); }

json bundle_json(const metric_bundle& b) {
  json j;
  for (std::size_t k = 0; k < metric_count; ++k) j[metric_names[k]] = metric_value(b, k);
  json undefined = json::array();
  for (std::size_t k = 0; k < metric_count; ++k) {
    if (b.undefined & (1u << k)) undefined.push_back(metric_names[k]);
  }
  j["undefined"] = undefined;
  return j;
}

metric_bundle bundle_from_json(const json& j) {
  metric_bundle b;
  for (std::size_t k = 0; k < metric_count; ++k) metric_value(b, k) = j.at(metric_names[k]).get<double>();
  for (const auto& name : j.at("undefined")) {
    const auto s = name.get<std::string>();
    for (std::size_t k = 0; k < metric_count; ++k) {
      if (s == metric_names[k]) b.undefined |= 1u << k;
    }
  }
  return b;
}

json per_class_json(std::span<const metric_bundle> per_class, std::span<const std::string> names) {
  json j = json::object();
  for (std::size_t k = 0; k < per_class.size(); ++k) j[names[k]] = bundle_json(per_class[k]);
  return j;
}

json confusion_json(const confusion_matrix& cm) {
  json rows = json::array();
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < cm.classes(); ++j) row.push_back(cm.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

confusion_matrix confusion_from_json(const json& rows) {
  confusion_matrix cm(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw parse_error("run manifest: confusion matrix is not square");
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto n = rows[i][j].get<std::int64_t>();
      if (n < 0) throw parse_error("run manifest: negative confusion count");
      cm.add(i, j, n);
    }
  }
  return cm;
}

template <typename F>
std::string render(F&& fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

fs::path unique_run_dir(const fs::path& out, const std::string& name) {
  fs::path dir = out / name;
  for (int i = 1; fs::exists(dir); ++i) dir = out / (name + "-" + std::to_string(i));
  return dir;
}

void point_latest(const fs::path& out, const fs::path& run_dir) {
  const auto link = out / "latest";
  const auto tmp = out / ".latest.tmp";
  std::error_code ec;
  fs::remove(tmp, ec);
  fs::create_directory_symlink(run_dir.filename(), tmp, ec);
  if (ec) return;
  fs::rename(tmp, link, ec);
  if (ec) fs::remove(tmp, ec);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  const auto j = config_to_json(experiment_config{});
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  return keys;
}

json config_to_json(const experiment_config& c) {
  return {
      {"image_size", c.encoder.image_size},
      {"tile_size", c.encoder.tile_size},
      {"channels", c.encoder.channels},
      {"embed_dim", c.encoder.embed_dim},
      {"depth", c.encoder.depth},
      {"heads", c.encoder.heads},
      {"registers", c.encoder.registers},
      {"mlp_ratio", c.encoder.mlp_ratio},
      {"bottleneck", c.head.bottleneck},
      {"classes", c.head.classes},
      {"folds", c.train.folds},
      {"lr_max", c.train.lr_max},
      {"lr_min", c.train.lr_min},
      {"weight_decay", c.train.weight_decay},
      {"warmup_epochs", c.train.warmup_epochs},
      {"epochs", c.train.epochs},
      {"batch_size", c.train.batch_size},
      {"seed", c.train.seed},
      {"dropout_rate", c.train.dropout_rate},
      {"freeze_encoder", c.train.freeze_encoder},
      {"beta1", c.train.beta1},
      {"beta2", c.train.beta2},
      {"adam_eps", c.train.adam_eps},
  };
}

experiment_config config_from_json(const json& j, experiment_config c) {
  if (!j.is_object()) throw config_error("config: expected a JSON object of flat keys");
  for (const auto& [key, v] : j.items()) {
    if (key == "image_size") c.encoder.image_size = get_size(v, key);
    else if (key == "tile_size") c.encoder.tile_size = get_size(v, key);
    else if (key == "channels") c.encoder.channels = get_size(v, key);
    else if (key == "embed_dim") c.encoder.embed_dim = get_size(v, key);
    else if (key == "depth") c.encoder.depth = get_size(v, key);
    else if (key == "heads") c.encoder.heads = get_size(v, key);
    else if (key == "registers") c.encoder.registers = get_size(v, key);
    else if (key == "mlp_ratio") c.encoder.mlp_ratio = get_size(v, key);
    else if (key == "bottleneck") c.head.bottleneck = get_size(v, key);
    else if (key == "classes") c.head.classes = get_size(v, key);
    else if (key == "folds") c.train.folds = get_size(v, key);
    else if (key == "lr_max") c.train.lr_max = get_double(v, key);
    else if (key == "lr_min") c.train.lr_min = get_double(v, key);
    else if (key == "weight_decay") c.train.weight_decay = get_double(v, key);
    else if (key == "warmup_epochs") c.train.warmup_epochs = get_size(v, key);
    else if (key == "epochs") c.train.epochs = get_size(v, key);
    else if (key == "batch_size") c.train.batch_size = get_size(v, key);
    else if (key == "seed") c.train.seed = get_size(v, key);
    else if (key == "dropout_rate") c.train.dropout_rate = get_double(v, key);
    else if (key == "freeze_encoder") c.train.freeze_encoder = get_bool(v, key);
    else if (key == "beta1") c.train.beta1 = get_double(v, key);
    else if (key == "beta2") c.train.beta2 = get_double(v, key);
    else if (key == "adam_eps") c.train.adam_eps = get_double(v, key);
    else throw config_error("config: unknown key \"" + key + "\"");
  }
  return c;
}

experiment_config load_config(const fs::path& path, experiment_config base) {
  std::ifstream in(path);
  if (!in) throw io_error("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw parse_error("config: " + path.string() + ": " + e.what(), e.byte);
  }
  return config_from_json(j, std::move(base));
}

void write_class_table(std::ostream& out, std::span<const metric_bundle> per_class, const metric_bundle& average,
                       std::span<const std::string> class_names) {
  static constexpr const char* labels[metric_count] = {"Accuracy", "Precision", "Recall",
                                                       "Specificity", "F1", "MCC"};
  const int w = 9;
  bool flagged = false;
  out << std::left << std::setw(12) << "Metric";
  for (const auto& n : class_names) out << std::right << std::setw(w) << n;
  out << std::right << std::setw(w) << "Average" << '\n';
  auto cell = [&](const metric_bundle& b, std::size_t k) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << metric_value(b, k);
    if (b.undefined & (1u << k)) {
      s << '*';
      flagged = true;
    }
    out << std::setw(w) << s.str();
  };
  for (std::size_t k = 0; k < metric_count; ++k) {
    out << std::left << std::setw(12) << labels[k] << std::right;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      if (k == 5) {
        out << std::setw(w) << "--";
      } else {
        cell(per_class[c], k);
      }
    }
    cell(average, k);
    out << '\n';
  }
  if (flagged) out << "* zero denominator in at least one fold, counted as 0\n";
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw io_error("write failed for " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

dataset_manifest run_gen_data(const gen_data_options& opt, std::ostream& log) {
  if (opt.size == 0) throw parameter_error("gen-data: --size must be positive");
  if (fs::exists(opt.out)) {
    if (!fs::is_directory(opt.out)) throw parameter_error("gen-data: " + opt.out.string() + " is not a directory");
    if (!fs::is_empty(opt.out)) {
      if (!opt.force) {
        throw parameter_error("gen-data: " + opt.out.string() + " is not empty (use --force to overwrite)");
      }
      for (auto code : class_codes) fs::remove_all(opt.out / std::string(code));
      fs::remove(opt.out / "manifest.json");
    }
  }
  fs::create_directories(opt.out);
  auto m = generate_synthetic(opt.counts, opt.seed, opt.size, opt.out);

  const auto counts = m.class_counts();
  const auto total = m.entries.size();
  log << "class  count   share\n";
  for (std::size_t k = 0; k < class_count; ++k) {
    const double share = total ? 100.0 * static_cast<double>(counts[k]) / static_cast<double>(total) : 0.0;
    log << std::left << std::setw(5) << class_codes[k] << std::right << std::setw(7) << counts[k] << std::setw(7)
        << std::fixed << std::setprecision(1) << share << "%\n";
  }
  log << "total" << std::setw(7) << total << "\n";
  log << "wrote " << (opt.out / "manifest.json").string() << "\n";
  return m;
}

cv_run_outputs run_cv(const cv_run_options& opt, std::ostream& log) {
  experiment_config cfg = opt.config;
  cfg.reconcile();
  const auto data = load_dataset(opt.data);
  if (data.empty()) throw data_error("cv: dataset " + opt.data.string() + " has no samples");

  const auto started = std::chrono::system_clock::now();
  const std::string name =
      opt.run_name.empty() ? "run-" + timestamp_utc(started, "%Y%m%d-%H%M%S") : opt.run_name;
  fs::create_directories(opt.out);
  const fs::path final_dir = unique_run_dir(opt.out, name);
  const fs::path staging = opt.out / ("." + final_dir.filename().string() + ".partial");
  fs::remove_all(staging);
  fs::create_directories(staging);

  try {
    std::mutex log_mutex;
    train_options topt;
    topt.checkpoint_dir = staging;
    if (opt.verbose) {
      topt.on_epoch = [&](std::size_t fold, std::size_t epoch, double loss) {
        std::lock_guard lock(log_mutex);
        log << "fold " << fold << " epoch " << epoch + 1 << "/" << cfg.train.epochs << " loss " << std::fixed
            << std::setprecision(4) << loss << "\n";
      };
    }
    auto result = cross_validate(data, cfg, topt, opt.jobs);

    const auto names = class_names();
    json folds = json::array();
    for (const auto& r : result.folds) {
      const std::string csv = "fold_" + std::to_string(r.fold) + ".csv";
      write_file_atomic(staging / csv, render([&](std::ostream& s) {
                          write_metrics_csv(s, class_report{r.per_class, r.micro}, names);
                        }));
      folds.push_back({
          {"fold", r.fold},
          {"samples", r.confusion.total()},
          {"micro", bundle_json(r.micro)},
          {"per_class", per_class_json(r.per_class, names)},
          {"confusion", confusion_json(r.confusion)},
          {"epoch_loss", r.epoch_loss},
          {"checkpoint", "fold_" + std::to_string(r.fold) + ".ckpt"},
          {"metrics_csv", csv},
      });
      log << "fold " << r.fold << ": " << r.confusion.total() << " held out, micro F1 " << std::fixed
          << std::setprecision(4) << r.micro.f1 << ", MCC " << r.micro.mcc << "\n";
    }

    const std::string table = render([&](std::ostream& s) {
      write_class_table(s, result.per_class_average, result.average, names);
    });
    write_file_atomic(staging / "average.csv", render([&](std::ostream& s) {
                        write_metrics_csv(s, class_report{result.per_class_average, result.average}, names);
                      }));
    write_file_atomic(staging / "table.txt", table);
    write_file_atomic(staging / "confusion.txt",
                      render([&](std::ostream& s) { write_confusion_grid(s, result.aggregated, names); }));
    write_file_atomic(staging / "confusion_normalized.txt",
                      render([&](std::ostream& s) { write_proportion_grid(s, result.aggregated, names); }));

    json manifest = {
        {"format", "pathvit-run 1"},
        {"command", "cv"},
        {"data", fs::absolute(opt.data).string()},
        {"samples", data.size()},
        {"config", config_to_json(cfg)},
        {"seed", cfg.train.seed},
        {"jobs", opt.jobs},
        {"started", timestamp_utc(started, "%Y-%m-%dT%H:%M:%SZ")},
        {"finished", iso_now()},
        {"classes", names},
        {"folds", folds},
        {"average", bundle_json(result.average)},
        {"per_class_average", per_class_json(result.per_class_average, names)},
        {"aggregated_confusion", confusion_json(result.aggregated)},
        {"artifacts",
         {{"table", "table.txt"},
          {"average_csv", "average.csv"},
          {"confusion", "confusion.txt"},
          {"confusion_normalized", "confusion_normalized.txt"}}},
    };
    write_file_atomic(staging / "run.json", manifest.dump(2) + "\n");
    fs::rename(staging, final_dir);

    // The checkpoints now live in the final directory.
    for (auto& r : result.folds) r.checkpoint_path = (final_dir / fs::path(r.checkpoint_path).filename()).string();
    point_latest(opt.out, final_dir);

    log << "\n" << table << "\nwrote " << final_dir.string() << "\n";
    return {final_dir, final_dir / "run.json", std::move(result)};
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
}

class_report run_eval(const eval_options& opt, std::ostream& log) {
  const auto m = load_checkpoint(opt.checkpoint);
  const auto data = load_dataset(opt.data);
  if (data.empty()) throw data_error("eval: dataset " + opt.data.string() + " has no samples");

  std::vector<std::size_t> idx(data.size());
  std::vector<int> labels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    idx[i] = i;
    labels.push_back(data[i].label);
  }
  const auto preds = predict_all(m, data, idx);
  const auto cm = pathvit::accumulate(preds, labels, m.head_cfg.classes);
  const auto report = evaluate_report(cm);

  auto names = class_names();
  names.resize(m.head_cfg.classes);
  for (std::size_t k = class_count; k < names.size(); ++k) names[k] = "class" + std::to_string(k);
  const auto csv = render([&](std::ostream& s) { write_metrics_csv(s, report, names); });
  const auto grid = render([&](std::ostream& s) { write_confusion_grid(s, cm, names); });
  const auto norm = render([&](std::ostream& s) { write_proportion_grid(s, cm, names); });

  fs::create_directories(opt.out);
  write_file_atomic(opt.out / "metrics.csv", csv);
  write_file_atomic(opt.out / "confusion.txt", grid);
  write_file_atomic(opt.out / "confusion_normalized.txt", norm);
  log << data.size() << " samples, micro F1 " << std::fixed << std::setprecision(4) << report.micro.f1 << ", MCC "
      << report.micro.mcc << "\nwrote " << opt.out.string() << "\n";
  return report;
}

void run_report(const fs::path& manifest, std::ostream& out) {
  std::ifstream in(manifest);
  if (!in) throw io_error("report: cannot open " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw parse_error("report: " + manifest.string() + ": " + e.what(), e.byte);
  }
  try {
    if (j.at("format").get<std::string>() != "pathvit-run 1") {
      throw parse_error("report: " + manifest.string() + " is not a pathvit run manifest");
    }
    const auto names = j.at("classes").get<std::vector<std::string>>();
    std::vector<metric_bundle> per_class;
    for (const auto& n : names) per_class.push_back(bundle_from_json(j.at("per_class_average").at(n)));
    const auto average = bundle_from_json(j.at("average"));
    const auto cm = confusion_from_json(j.at("aggregated_confusion"));
    if (cm.classes() != names.size()) throw parse_error("report: confusion matrix does not match class list");

    out << "run " << fs::weakly_canonical(manifest).parent_path().filename().string() << " (" << j.at("command").get<std::string>()
        << ", seed " << j.at("seed").get<std::uint64_t>() << ", " << j.at("folds").size() << " folds, "
        << cm.total() << " samples)\n";
    out << "started " << j.at("started").get<std::string>() << ", finished " << j.at("finished").get<std::string>()
        << "\n\n";
    for (const auto& f : j.at("folds")) {
      const auto b = bundle_from_json(f.at("micro"));
      out << "fold " << f.at("fold").get<std::size_t>() << "  F1 " << std::fixed << std::setprecision(4) << b.f1
          << "  MCC " << b.mcc << "\n";
    }
    out << "\nClass-wise performance (mean over folds; Average is the micro average)\n";
    write_class_table(out, per_class, average, names);
    out << "\nAggregated confusion matrix (rows: true class)\n";
    write_confusion_grid(out, cm, names);
    out << "\nRow-normalized (%)\n";
    write_proportion_grid(out, cm, names);
  } catch (const json::exception& e) {
    throw parse_error("report: malformed manifest " + manifest.string() + ": " + e.what());
  }
}

}  // namespace pathvit
