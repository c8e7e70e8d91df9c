#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathvit/dataset.hpp"
#include "pathvit/metrics.hpp"
#include "pathvit/model.hpp"

namespace pathvit {

struct train_config {
  std::size_t folds = 5;
  double lr_max = 1e-5;
  double lr_min = 1e-6;
  double weight_decay = 0.01;
  std::size_t warmup_epochs = 1;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double dropout_rate = 0.5;
  bool freeze_encoder = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Everything needed to rebuild a run.
struct experiment_config {
  encoder_config encoder;
  head_config head;
  train_config train;

  // Copies the shared knobs (embed_dim, dropout rate) into the head and
  // validates all three parts.
  void reconcile();
};

// Fold index per sample.
using fold_assignment = std::vector<int>;

// Per class: shuffle by seed, deal round-robin. The dealing position carries
// over between classes so global fold sizes also differ by at most one.
// Throws stratification_error naming a class with fewer than `folds` samples.
fold_assignment stratified_kfold(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

// Linear warmup 0 -> lr_max over the warmup steps, then cosine annealing to
// lr_min at the last step.
double lr_at(std::size_t step, const train_config& cfg, std::size_t steps_per_epoch);

struct adam_moments {
  std::vector<float> m, v;
};

// Adam with bias correction and decoupled weight decay for one tensor:
// w <- w - lr*wd*w, then w <- w - lr * mhat / (sqrt(vhat) + eps). `step` is
// 1-based.
void adam_update(std::span<float> weights, std::span<const float> grads, adam_moments& state, std::size_t step,
                 double lr, const train_config& cfg);

// Optimizer over a parameter list. Parameters without requires_grad are
// skipped.
class adam_optimizer {
 public:
  adam_optimizer(std::vector<named_tensor<float>> params, const train_config& cfg);

  void step(double lr);
  void zero_grad();
  std::size_t steps_taken() const { return steps_; }

 private:
  std::vector<named_tensor<float>> params_;
  std::vector<adam_moments> state_;
  train_config cfg_;
  std::size_t steps_ = 0;
};

struct fold_result {
  std::size_t fold = 0;
  std::vector<metric_bundle> per_class;
  metric_bundle micro;
  confusion_matrix confusion;
  std::string checkpoint_path;
  std::vector<double> epoch_loss;
  // Eval-mode accuracy on the fold's own training split, when requested.
  std::optional<double> train_accuracy;
};

struct train_options {
  // Writes fold_<f>.ckpt here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  bool measure_train_accuracy = false;
  // Called after every epoch with (fold, epoch, mean loss).
  std::function<void(std::size_t, std::size_t, double)> on_epoch;
};

// Deterministic per-sample preprocessing plus eval-mode prediction.
std::vector<int> predict_all(const model<float>& m, const dataset& data, std::span<const std::size_t> indices,
                             std::size_t batch_size = 32);

// Trains on the samples in `train_idx` with the schedule above. Fully
// determined by cfg.train.seed and `stream`.
model<float> train_model(const dataset& data, std::span<const std::size_t> train_idx, const experiment_config& cfg,
                         std::uint64_t stream, std::vector<double>* epoch_loss = nullptr,
                         const std::function<void(std::size_t, double)>& on_epoch = {});

fold_result train_fold(const dataset& data, const fold_assignment& assignment, std::size_t fold,
                       const experiment_config& cfg, const train_options& options = {});

struct cv_result {
  std::vector<fold_result> folds;
  std::vector<metric_bundle> per_class_average;
  metric_bundle average;
  confusion_matrix aggregated;
};

// Unweighted mean over folds of every metric; undefined flags are OR-ed.
metric_bundle average_bundles(std::span<const metric_bundle> bundles);

// Folds run on up to `jobs` threads; results are reduced in fold order.
cv_result cross_validate(const dataset& data, const experiment_config& cfg, const train_options& options = {},
                         std::size_t jobs = 1);

}  // namespace pathvit
