#include "pathvit/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pathvit/errors.hpp"

namespace pathvit {

confusion_matrix::confusion_matrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {}

void confusion_matrix::add(std::size_t truth, std::size_t predicted, std::int64_t n) {
  if (truth >= k_ || predicted >= k_) {
    throw data_error("confusion_matrix: class index outside [0, " + std::to_string(k_) + ")");
  }
  counts_[truth * k_ + predicted] += n;
}

std::int64_t confusion_matrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t confusion_matrix::trace() const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
  return s;
}

std::int64_t confusion_matrix::row_sum(std::size_t i) const {
  std::int64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += at(i, j);
  return s;
}

std::int64_t confusion_matrix::col_sum(std::size_t j) const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += at(i, j);
  return s;
}

confusion_matrix& confusion_matrix::operator+=(const confusion_matrix& other) {
  if (other.k_ != k_) {
    throw dimension_error("confusion_matrix: cannot merge " + std::to_string(other.k_) + "-class into " +
                          std::to_string(k_) + "-class matrix");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

double metric_value(const metric_bundle& b, std::size_t index) {
  return metric_value(const_cast<metric_bundle&>(b), index);
}

double& metric_value(metric_bundle& b, std::size_t index) {
  switch (index) {
    case 0: return b.accuracy;
    case 1: return b.precision;
    case 2: return b.recall;
    case 3: return b.specificity;
    case 4: return b.f1;
    case 5: return b.mcc;
  }
  throw contract_error("metric_value: index out of range");
}

confusion_matrix accumulate(std::span<const int> predictions, std::span<const int> labels, std::size_t k) {
  if (predictions.size() != labels.size()) {
    throw data_error("accumulate: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  confusion_matrix cm(k);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    const int t = labels[s], p = predictions[s];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= k || static_cast<std::size_t>(p) >= k) {
      throw data_error("accumulate: sample " + std::to_string(s) + " has label " + std::to_string(t) +
                       " / prediction " + std::to_string(p) + " outside [0, " + std::to_string(k) + ")");
    }
    cm.add(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

binary_counts one_vs_rest(const confusion_matrix& cm, std::size_t cls) {
  if (cls >= cm.classes()) throw data_error("one_vs_rest: class index out of range");
  binary_counts b;
  b.tp = cm.at(cls, cls);
  b.fn = cm.row_sum(cls) - b.tp;
  b.fp = cm.col_sum(cls) - b.tp;
  b.tn = cm.total() - b.tp - b.fn - b.fp;
  return b;
}

namespace {

// num / den, or 0 with `flag` recorded when den == 0.
double ratio(std::int64_t num, std::int64_t den, metric_bundle& out, metric_flag flag) {
  if (den == 0) {
    out.undefined |= flag;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

metric_bundle basic_metrics(const binary_counts& b) {
  if (b.tp < 0 || b.tn < 0 || b.fp < 0 || b.fn < 0) throw contract_error("basic_metrics: negative count");
  if (b.total() == 0) throw contract_error("basic_metrics: all counts are zero");
  metric_bundle m;
  m.accuracy = ratio(b.tp + b.tn, b.total(), m, undefined_accuracy);
  m.precision = ratio(b.tp, b.tp + b.fp, m, undefined_precision);
  m.recall = ratio(b.tp, b.tp + b.fn, m, undefined_recall);
  m.specificity = ratio(b.tn, b.tn + b.fp, m, undefined_specificity);
  // 2PR/(P+R) with P and R expanded: a single rounding, so equal precision
  // and recall give an F1 bitwise equal to both. TP = 0 makes P + R = 0.
  if (b.tp == 0) {
    m.f1 = 0.0;
    m.undefined |= undefined_f1;
  } else {
    m.f1 = ratio(2 * b.tp, 2 * b.tp + b.fp + b.fn, m, undefined_f1);
  }
  const double num = static_cast<double>(b.tp) * static_cast<double>(b.tn) -
                     static_cast<double>(b.fp) * static_cast<double>(b.fn);
  const double den = static_cast<double>(b.tp + b.fp) * static_cast<double>(b.tp + b.fn) *
                     static_cast<double>(b.tn + b.fp) * static_cast<double>(b.tn + b.fn);
  if (den == 0.0) {
    m.undefined |= undefined_mcc;
    m.mcc = 0.0;
  } else {
    m.mcc = num / std::sqrt(den);
  }
  return m;
}

double mcc_multiclass(const confusion_matrix& cm, bool* undefined) {
  const std::size_t k = cm.classes();
  const double s = static_cast<double>(cm.total());
  const double c = static_cast<double>(cm.trace());
  double pt = 0, pp = 0, tt = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double t = static_cast<double>(cm.row_sum(i));
    const double p = static_cast<double>(cm.col_sum(i));
    pt += p * t;
    pp += p * p;
    tt += t * t;
  }
  const double den = (s * s - pp) * (s * s - tt);
  if (undefined) *undefined = den == 0.0;
  if (den == 0.0) return 0.0;
  return (c * s - pt) / std::sqrt(den);
}

metric_bundle micro_average(const confusion_matrix& cm) {
  if (cm.classes() == 0 || cm.total() == 0) throw contract_error("micro_average: empty confusion matrix");
  binary_counts pooled;
  for (std::size_t i = 0; i < cm.classes(); ++i) pooled += one_vs_rest(cm, i);
  metric_bundle m = basic_metrics(pooled);
  m.undefined &= ~(undefined_accuracy | undefined_mcc);
  m.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  bool mcc_undefined = false;
  m.mcc = mcc_multiclass(cm, &mcc_undefined);
  if (mcc_undefined) m.undefined |= undefined_mcc;
  return m;
}

std::vector<std::vector<double>> normalize_rows(const confusion_matrix& cm, std::vector<std::size_t>* empty_rows) {
  const std::size_t k = cm.classes();
  std::vector<std::vector<double>> out(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    const auto row = cm.row_sum(i);
    if (row == 0) {
      if (empty_rows) empty_rows->push_back(i);
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) out[i][j] = static_cast<double>(cm.at(i, j)) / static_cast<double>(row);
  }
  return out;
}

class_report evaluate_report(const confusion_matrix& cm) {
  class_report r;
  for (std::size_t i = 0; i < cm.classes(); ++i) r.per_class.push_back(basic_metrics(one_vs_rest(cm, i)));
  r.micro = micro_average(cm);
  return r;
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string name_of(std::span<const std::string> names, std::size_t i) {
  return i < names.size() ? names[i] : std::to_string(i);
}

}  // namespace

void write_metrics_csv(std::ostream& out, const class_report& report, std::span<const std::string> class_names) {
  out << "class";
  for (auto* n : metric_names) out << "," << n;
  out << "\n";
  auto row = [&](const std::string& name, const metric_bundle& b) {
    out << name;
    for (std::size_t m = 0; m < metric_count; ++m) out << "," << fixed(metric_value(b, m), 6);
    out << "\n";
  };
  for (std::size_t i = 0; i < report.per_class.size(); ++i) row(name_of(class_names, i), report.per_class[i]);
  row("micro", report.micro);
}

void write_confusion_grid(std::ostream& out, const confusion_matrix& cm, std::span<const std::string> class_names) {
  const std::size_t k = cm.classes();
  out << std::setw(8) << "true\\pred";
  for (std::size_t j = 0; j < k; ++j) out << std::setw(8) << name_of(class_names, j);
  out << "\n";
  for (std::size_t i = 0; i < k; ++i) {
    out << std::setw(9) << name_of(class_names, i);
    for (std::size_t j = 0; j < k; ++j) out << std::setw(8) << cm.at(i, j);
    out << "\n";
  }
}

void write_proportion_grid(std::ostream& out, const confusion_matrix& cm, std::span<const std::string> class_names) {
  const std::size_t k = cm.classes();
  std::vector<std::size_t> empty;
  const auto p = normalize_rows(cm, &empty);
  out << std::setw(8) << "true\\pred";
  for (std::size_t j = 0; j < k; ++j) out << std::setw(8) << name_of(class_names, j);
  out << "\n";
  for (std::size_t i = 0; i < k; ++i) {
    const bool blank = cm.row_sum(i) == 0;
    out << std::setw(9) << name_of(class_names, i);
    for (std::size_t j = 0; j < k; ++j) {
      out << std::setw(8) << (blank ? std::string("n/a") : fixed(100.0 * p[i][j], 1) + "%");
    }
    out << "\n";
  }
}

}  // namespace pathvit
