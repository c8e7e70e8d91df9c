#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pathvit {

// counts[i][j] = samples of true class i predicted as class j.
class confusion_matrix {
 public:
  confusion_matrix() = default;
  explicit confusion_matrix(std::size_t classes);

  std::size_t classes() const noexcept { return k_; }
  std::int64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  void add(std::size_t truth, std::size_t predicted, std::int64_t n = 1);

  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t row_sum(std::size_t i) const;
  std::int64_t col_sum(std::size_t j) const;

  // Elementwise sum; used to merge per-thread or per-fold matrices.
  confusion_matrix& operator+=(const confusion_matrix& other);
  bool operator==(const confusion_matrix&) const = default;

  std::span<const std::int64_t> counts() const noexcept { return counts_; }

 private:
  std::size_t k_ = 0;
  std::vector<std::int64_t> counts_;
};

struct binary_counts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::int64_t total() const { return tp + tn + fp + fn; }
  binary_counts& operator+=(const binary_counts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const binary_counts&) const = default;
};

// Bits set in metric_bundle::undefined when a denominator was zero. The
// affected value is reported as 0.
enum metric_flag : std::uint32_t {
  undefined_accuracy = 1u << 0,
  undefined_precision = 1u << 1,
  undefined_recall = 1u << 2,
  undefined_specificity = 1u << 3,
  undefined_f1 = 1u << 4,
  undefined_mcc = 1u << 5,
};

struct metric_bundle {
  double accuracy = 0, precision = 0, recall = 0, specificity = 0, f1 = 0, mcc = 0;
  std::uint32_t undefined = 0;

  bool is_undefined(metric_flag f) const { return (undefined & f) != 0; }
};

inline constexpr std::size_t metric_count = 6;
// Column order for CSV output and averaging.
inline constexpr const char* metric_names[metric_count] = {"accuracy", "precision", "recall",
                                                          "specificity", "f1", "mcc"};
double metric_value(const metric_bundle& b, std::size_t index);
double& metric_value(metric_bundle& b, std::size_t index);

// Throws data_error on mismatched lengths or indices outside [0, k).
confusion_matrix accumulate(std::span<const int> predictions, std::span<const int> labels, std::size_t k);

binary_counts one_vs_rest(const confusion_matrix& cm, std::size_t cls);

// Accuracy, precision, recall, F1, specificity and binary MCC from a single
// one-vs-rest reduction. Throws contract_error when all counts are zero.
metric_bundle basic_metrics(const binary_counts& b);

// Metrics on class-pooled counts. For single-label data the pooled FP and FN
// both equal total - trace, so precision = recall = F1 = trace / total; the
// accuracy field is that same multiclass accuracy and mcc is the
// K-category statistic.
metric_bundle micro_average(const confusion_matrix& cm);

// K-category correlation statistic; reduces to the binary MCC for K = 2.
// Zero denominator yields 0 with `undefined` set.
double mcc_multiclass(const confusion_matrix& cm, bool* undefined = nullptr);

// Row-normalized proportions. All-zero rows stay zero; their indices are
// appended to `empty_rows` when provided.
std::vector<std::vector<double>> normalize_rows(const confusion_matrix& cm,
                                                std::vector<std::size_t>* empty_rows = nullptr);

// Per-class bundles followed by the micro bundle.
struct class_report {
  std::vector<metric_bundle> per_class;
  metric_bundle micro;
};
class_report evaluate_report(const confusion_matrix& cm);

// CSV: header "class,accuracy,precision,recall,specificity,f1,mcc", one row
// per class, then a "micro" row.
void write_metrics_csv(std::ostream& out, const class_report& report,
                       std::span<const std::string> class_names);

// Plain-text grid of raw counts; rows are true classes.
void write_confusion_grid(std::ostream& out, const confusion_matrix& cm,
                          std::span<const std::string> class_names);

// Same layout with row-normalized percentages; empty rows print "n/a".
void write_proportion_grid(std::ostream& out, const confusion_matrix& cm,
                           std::span<const std::string> class_names);

}  // namespace pathvit
