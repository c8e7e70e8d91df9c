#include "pathvit/cv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

#include "pathvit/ops.hpp"
#include "pathvit/rng.hpp"

namespace pathvit {

void train_config::validate() const {
  if (folds < 2) throw config_error("train: folds must be at least 2");
  if (!(lr_min > 0.0 && lr_min < lr_max)) throw config_error("train: need 0 < lr_min < lr_max");
  if (!(weight_decay >= 0.0)) throw config_error("train: weight_decay must be non-negative");
  if (epochs == 0 || warmup_epochs >= epochs) throw config_error("train: need warmup_epochs < epochs");
  if (batch_size == 0) throw config_error("train: batch_size must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw config_error("train: dropout_rate must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
    throw config_error("train: invalid Adam hyperparameters");
  }
}

void experiment_config::reconcile() {
  head.embed_dim = encoder.embed_dim;
  head.dropout_rate = train.dropout_rate;
  encoder.validate();
  head.validate();
  train.validate();
}

fold_assignment stratified_kfold(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw config_error("stratified_kfold: folds must be at least 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, members] : by_class) {
    if (members.size() < folds) {
      const std::string name = label >= 0 && static_cast<std::size_t>(label) < class_count
                                   ? class_code(label)
                                   : "class " + std::to_string(label);
      throw stratification_error("stratified_kfold: class " + name + " has " + std::to_string(members.size()) +
                                     " samples, fewer than " + std::to_string(folds) + " folds",
                                 name);
    }
  }
  fold_assignment out(labels.size(), -1);
  std::size_t deal = 0;
  for (auto& [label, members] : by_class) {
    rng gen(derive_seed({seed, static_cast<std::uint64_t>(label), 0x5f01d}));
    gen.shuffle(members);
    for (std::size_t idx : members) out[idx] = static_cast<int>(deal++ % folds);
  }
  return out;
}

double lr_at(std::size_t step, const train_config& cfg, std::size_t steps_per_epoch) {
  if (steps_per_epoch == 0) throw contract_error("lr_at: steps_per_epoch must be positive");
  const std::size_t total = cfg.epochs * steps_per_epoch;
  const std::size_t warmup = cfg.warmup_epochs * steps_per_epoch;
  if (step >= total) {
    throw contract_error("lr_at: step " + std::to_string(step) + " beyond schedule of " + std::to_string(total));
  }
  if (step < warmup) return cfg.lr_max * static_cast<double>(step) / static_cast<double>(warmup);
  const std::size_t span = std::max<std::size_t>(total - 1 - warmup, 1);
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(span);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void adam_update(std::span<float> weights, std::span<const float> grads, adam_moments& state, std::size_t step,
                 double lr, const train_config& cfg) {
  if (grads.size() != weights.size()) {
    throw dimension_error("adam: " + std::to_string(grads.size()) + " gradients for " +
                          std::to_string(weights.size()) + " weights");
  }
  if (state.m.empty()) {
    state.m.assign(weights.size(), 0.0f);
    state.v.assign(weights.size(), 0.0f);
  }
  if (state.m.size() != weights.size() || state.v.size() != weights.size()) {
    throw dimension_error("adam: moment buffers do not match weights");
  }
  if (step == 0) throw contract_error("adam: step is 1-based");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = grads[i];
    const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    state.m[i] = static_cast<float>(m);
    state.v[i] = static_cast<float>(v);
    double w = weights[i];
    w -= lr * cfg.weight_decay * w;
    w -= lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
    weights[i] = static_cast<float>(w);
  }
}

adam_optimizer::adam_optimizer(std::vector<named_tensor<float>> params, const train_config& cfg)
    : params_(std::move(params)), state_(params_.size()), cfg_(cfg) {}

void adam_optimizer::step(double lr) {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].value;
    if (!p.requires_grad()) continue;
    auto w = p.mutable_data();
    if (!p.has_grad()) {
      const std::vector<float> zero(w.size(), 0.0f);
      adam_update(w, zero, state_[i], steps_, lr, cfg_);
    } else {
      adam_update(w, p.grad(), state_[i], steps_, lr, cfg_);
    }
  }
}

void adam_optimizer::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

std::vector<int> predict_all(const model<float>& m, const dataset& data, std::span<const std::size_t> indices,
                             std::size_t batch_size) {
  no_grad_guard guard;
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t end = std::min(indices.size(), start + batch_size);
    std::vector<tensor> images;
    for (std::size_t i = start; i < end; ++i) images.push_back(preprocess(data.at(indices[i]).image));
    const auto logits = m.forward(images, run_mode::eval, 0);
    const std::size_t k = logits.dim(1);
    for (std::size_t b = 0; b < end - start; ++b) out.push_back(predict(logits.data().subspan(b * k, k)));
  }
  return out;
}

model<float> train_model(const dataset& data, std::span<const std::size_t> train_idx, const experiment_config& cfg_in,
                         std::uint64_t stream, std::vector<double>* epoch_loss,
                         const std::function<void(std::size_t, double)>& on_epoch) {
  experiment_config cfg = cfg_in;
  cfg.reconcile();
  if (train_idx.empty()) throw config_error("train: empty training split");
  const auto& tc = cfg.train;
  auto m = model<float>::init(cfg.encoder, cfg.head, derive_seed({tc.seed, stream, 0x1417}));
  if (tc.freeze_encoder) m.set_encoder_trainable(false);
  adam_optimizer opt(m.parameters(), tc);

  const std::size_t steps_per_epoch = (train_idx.size() + tc.batch_size - 1) / tc.batch_size;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    rng gen(derive_seed({tc.seed, stream, epoch, 0xe90c}));
    gen.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      std::vector<tensor> images;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const auto& s = data.at(order[i]);
        images.push_back(preprocess(s.image));
        labels.push_back(s.label);
      }
      const auto logits = m.forward(images, run_mode::train, derive_seed({tc.seed, stream, step, 0xd7}));
      const auto loss = cross_entropy(logits, std::span<const int>(labels));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw numeric_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(step));
      }
      loss_sum += value * static_cast<double>(end - start);
      backward(loss);
      opt.step(lr_at(step, tc, steps_per_epoch));
      opt.zero_grad();
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    if (epoch_loss) epoch_loss->push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return m;
}

fold_result train_fold(const dataset& data, const fold_assignment& assignment, std::size_t fold,
                       const experiment_config& cfg, const train_options& options) {
  if (assignment.size() != data.size()) {
    throw data_error("train_fold: assignment covers " + std::to_string(assignment.size()) + " of " +
                     std::to_string(data.size()) + " samples");
  }
  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (static_cast<std::size_t>(assignment[i]) == fold ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty()) throw config_error("train_fold: fold " + std::to_string(fold) + " leaves no training data");
  if (val_idx.empty()) throw config_error("train_fold: fold " + std::to_string(fold) + " is empty");

  fold_result r;
  r.fold = fold;
  std::function<void(std::size_t, double)> hook;
  if (options.on_epoch) hook = [&](std::size_t e, double l) { options.on_epoch(fold, e, l); };
  const auto m = train_model(data, train_idx, cfg, fold, &r.epoch_loss, hook);

  std::vector<int> labels;
  for (auto i : val_idx) labels.push_back(data[i].label);
  const auto preds = predict_all(m, data, val_idx, cfg.train.batch_size);
  r.confusion = pathvit::accumulate(preds, labels, m.head_cfg.classes);
  const auto report = evaluate_report(r.confusion);
  r.per_class = report.per_class;
  r.micro = report.micro;

  if (options.measure_train_accuracy) {
    const auto train_preds = predict_all(m, data, train_idx, cfg.train.batch_size);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < train_idx.size(); ++i) hits += train_preds[i] == data[train_idx[i]].label;
    r.train_accuracy = static_cast<double>(hits) / static_cast<double>(train_idx.size());
  }
  if (options.checkpoint_dir) {
    const auto path = *options.checkpoint_dir / ("fold_" + std::to_string(fold) + ".ckpt");
    save_checkpoint(m, path);
    r.checkpoint_path = path.string();
  }
  return r;
}

metric_bundle average_bundles(std::span<const metric_bundle> bundles) {
  metric_bundle avg;
  if (bundles.empty()) return avg;
  for (std::size_t k = 0; k < metric_count; ++k) {
    double s = 0.0;
    for (const auto& b : bundles) s += metric_value(b, k);
    metric_value(avg, k) = s / static_cast<double>(bundles.size());
  }
  for (const auto& b : bundles) avg.undefined |= b.undefined;
  return avg;
}

cv_result cross_validate(const dataset& data, const experiment_config& cfg_in, const train_options& options,
                         std::size_t jobs) {
  experiment_config cfg = cfg_in;
  cfg.reconcile();
  std::vector<int> labels;
  for (const auto& s : data) labels.push_back(s.label);
  const auto assignment = stratified_kfold(labels, cfg.train.folds, cfg.train.seed);

  const std::size_t folds = cfg.train.folds;
  std::vector<fold_result> results(folds);
  std::vector<std::exception_ptr> errors(folds);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t f = next++; f < folds; f = next++) {
      try {
        results[f] = train_fold(data, assignment, f, cfg, options);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, folds);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  cv_result out;
  out.aggregated = confusion_matrix(cfg.head.classes);
  std::vector<metric_bundle> micro;
  for (const auto& r : results) {
    out.aggregated += r.confusion;
    micro.push_back(r.micro);
  }
  out.average = average_bundles(micro);
  for (std::size_t k = 0; k < cfg.head.classes; ++k) {
    std::vector<metric_bundle> per;
    for (const auto& r : results) per.push_back(r.per_class[k]);
    out.per_class_average.push_back(average_bundles(per));
  }
  out.folds = std::move(results);
  return out;
}

}  // namespace pathvit
