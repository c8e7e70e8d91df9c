#include <doctest.h>

#include <cmath>
#include <numeric>

#include "pathvit/cv.hpp"
#include "pathvit/errors.hpp"
#include "pathvit/rng.hpp"
#include "temp_dir.hpp"

using namespace pathvit;

namespace {

std::vector<int> labels_for(std::span<const std::size_t> counts) {
  std::vector<int> labels;
  for (std::size_t k = 0; k < counts.size(); ++k) labels.insert(labels.end(), counts[k], static_cast<int>(k));
  return labels;
}

experiment_config toy(std::size_t epochs) {
  experiment_config cfg;
  cfg.encoder.embed_dim = 8;
  cfg.encoder.depth = 1;
  cfg.encoder.heads = 2;
  cfg.head.bottleneck = 8;
  cfg.train.epochs = epochs;
  cfg.train.batch_size = 9;
  cfg.train.lr_max = 3e-3;
  cfg.train.lr_min = 3e-5;
  cfg.train.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
  train_config c;
  CHECK_NOTHROW(c.validate());
  c.lr_min = c.lr_max;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.warmup_epochs = c.epochs;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.folds = 1;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("stratified_kfold divisible case") {
  std::vector<std::size_t> counts(9, 5);
  auto labels = labels_for(counts);
  auto a = stratified_kfold(labels, 5, 1);
  for (int f = 0; f < 5; ++f)
    for (int k = 0; k < 9; ++k) {
      int n = 0;
      for (std::size_t i = 0; i < labels.size(); ++i) n += a[i] == f && labels[i] == k;
      CHECK(n == 1);
    }
}

TEST_CASE("stratified_kfold [10, 5]") {
  std::vector<std::size_t> counts{10, 5};
  auto labels = labels_for(counts);
  auto a = stratified_kfold(labels, 5, 2);
  for (int f = 0; f < 5; ++f) {
    int c0 = 0, c1 = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      c0 += a[i] == f && labels[i] == 0;
      c1 += a[i] == f && labels[i] == 1;
    }
    CHECK(c0 == 2);
    CHECK(c1 == 1);
  }
}

TEST_CASE("stratified_kfold long-tailed proportions") {
  rng gen(3);
  std::vector<int> labels(10000);
  for (auto& l : labels) {
    const double u = gen.uniform();
    l = u < 0.4 ? 0 : u < 0.7 ? 3 : u < 0.85 ? 4 : u < 0.95 ? 1 : u < 0.98 ? 6 : u < 0.99 ? 7 : 8;
  }
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto a = stratified_kfold(labels, 5, seed);
    std::array<std::array<int, 9>, 5> per{};
    std::array<int, 9> total{};
    std::array<int, 5> size{};
    for (std::size_t i = 0; i < labels.size(); ++i) {
      REQUIRE((a[i] >= 0 && a[i] < 5));
      ++per[a[i]][labels[i]];
      ++total[labels[i]];
      ++size[a[i]];
    }
    for (int f = 0; f < 5; ++f)
      for (int k = 0; k < 9; ++k) CHECK(std::abs(per[f][k] - total[k] / 5.0) < 1.0);
    CHECK(*std::max_element(size.begin(), size.end()) - *std::min_element(size.begin(), size.end()) <= 1);
  }
}

TEST_CASE("stratified_kfold is seeded") {
  auto labels = labels_for(std::vector<std::size_t>{30, 20});
  CHECK(stratified_kfold(labels, 5, 4) == stratified_kfold(labels, 5, 4));
  CHECK(stratified_kfold(labels, 5, 4) != stratified_kfold(labels, 5, 5));
}

TEST_CASE("stratified_kfold names the short class") {
  std::vector<std::size_t> counts{10, 10, 10, 10, 10, 10, 10, 10, 3};
  auto labels = labels_for(counts);
  try {
    stratified_kfold(labels, 5, 0);
    FAIL("no throw");
  } catch (const stratification_error& e) {
    CHECK(e.class_name() == "PL");
    CHECK(std::string(e.what()).find("PL") != std::string::npos);
  }
}

TEST_CASE("lr schedule values") {
  train_config c;  // 1e-5 -> 1e-6, 1 warmup epoch of 20
  const std::size_t spe = 11, warm = spe, total = 20 * spe;
  CHECK(lr_at(0, c, spe) == 0.0);
  CHECK(std::abs(lr_at(warm, c, spe) - 1e-5) <= 1e-12);
  CHECK(std::abs(lr_at(total - 1, c, spe) - 1e-6) <= 1e-12);
  CHECK(std::abs(lr_at(warm + (total - 1 - warm) / 2, c, spe) - 5.5e-6) <= 1e-12);
  CHECK(lr_at(warm / 2, c, spe) < lr_at(warm - 1, c, spe));
  CHECK(std::abs(lr_at(warm, c, spe) - lr_at(warm - 1, c, spe)) <= c.lr_max / warm + 1e-15);
  for (std::size_t s = warm; s + 1 < total; ++s) CHECK(lr_at(s + 1, c, spe) <= lr_at(s, c, spe));
  CHECK_THROWS_AS(lr_at(total, c, spe), contract_error);
}

TEST_CASE("adam examples") {
  train_config c;
  c.weight_decay = 0.0;
  std::vector<float> w{1.0f, -2.0f};
  adam_moments s;
  std::vector<float> zero{0.0f, 0.0f};
  adam_update(w, zero, s, 1, 1e-3, c);
  CHECK(w == std::vector<float>{1.0f, -2.0f});

  std::vector<float> g{0.5f, -3.0f};
  std::vector<float> w1{1.0f, -2.0f};
  adam_moments s1;
  adam_update(w1, g, s1, 1, 1e-2, c);
  for (std::size_t i = 0; i < 2; ++i) {
    const double expect = std::vector<double>{1.0, -2.0}[i] - 1e-2 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(w1[i] == doctest::Approx(expect).epsilon(1e-6));
  }

  std::vector<float> w2{0.0f};
  adam_moments s2;
  std::vector<float> g2{0.7f};
  float before = 0.0f;
  for (std::size_t t = 1; t <= 500; ++t) {
    before = w2[0];
    adam_update(w2, g2, s2, t, 1e-3, c);
  }
  CHECK(w2[0] - before == doctest::Approx(-1e-3).epsilon(1e-3));

  train_config decay;
  std::vector<float> w3{2.0f};
  std::vector<float> g3{4.0f};
  adam_moments s3;
  adam_update(w3, g3, s3, 1, 0.0, decay);
  CHECK(w3[0] == 2.0f);
  adam_update(w3, std::vector<float>{0.0f}, s3, 2, 0.1, decay);
  CHECK(w3[0] < 2.0f);

  std::vector<float> short_g{1.0f};
  CHECK_THROWS_AS(adam_update(w, short_g, s, 2, 1e-3, c), dimension_error);
}

TEST_CASE("decoupled decay alone shrinks weights by lr*wd") {
  train_config c;
  c.weight_decay = 0.5;
  std::vector<float> w{4.0f};
  adam_moments s;
  adam_update(w, std::vector<float>{0.0f}, s, 1, 0.1, c);
  CHECK(w[0] == doctest::Approx(4.0 * (1 - 0.05)));
}

TEST_CASE("average_bundles is an arithmetic mean") {
  std::vector<metric_bundle> b(5);
  const double f1[5] = {0.8, 0.9, 0.85, 0.95, 0.875};
  for (int i = 0; i < 5; ++i) b[i].f1 = f1[i];
  b[2].undefined = undefined_mcc;
  auto avg = average_bundles(b);
  CHECK(avg.f1 == doctest::Approx(0.875));
  CHECK(avg.is_undefined(undefined_mcc));
  std::vector<metric_bundle> same(5, b[0]);
  CHECK(average_bundles(same).f1 == doctest::Approx(b[0].f1));
}

TEST_CASE("train_fold rejects empty splits") {
  const std::array<std::size_t, 9> counts{1, 1, 1, 1, 1, 1, 1, 1, 1};
  auto data = synthesize(counts, 1, 16);
  fold_assignment all_zero(data.size(), 0);
  CHECK_THROWS_AS(train_fold(data, all_zero, 0, toy(2)), config_error);
  CHECK_THROWS_AS(train_fold(data, all_zero, 1, toy(2)), config_error);
}

TEST_CASE("memorizes one sample per class") {
  const std::array<std::size_t, 9> counts{1, 1, 1, 1, 1, 1, 1, 1, 1};
  auto data = synthesize(counts, 5, 32);
  std::vector<std::size_t> idx(9);
  std::iota(idx.begin(), idx.end(), 0);
  auto cfg = toy(150);
  cfg.train.lr_max = 1e-2;
  cfg.train.lr_min = 1e-4;
  std::vector<double> loss;
  auto m = train_model(data, idx, cfg, 0, &loss);
  CHECK(loss.size() == 150);
  CHECK(loss.back() < loss.front());
  auto preds = predict_all(m, data, idx);
  for (std::size_t i = 0; i < 9; ++i) CHECK(preds[i] == data[i].label);
}

TEST_CASE("cross_validate partitions and reproduces") {
  const std::array<std::size_t, 9> counts{5, 5, 5, 5, 5, 5, 5, 5, 5};
  auto data = synthesize(counts, 6, 16);
  auto cfg = toy(2);
  test_dir dir("cv");
  train_options opt;
  opt.checkpoint_dir = dir.path;
  auto a = cross_validate(data, cfg, opt, 1);
  REQUIRE(a.folds.size() == 5);
  CHECK(a.aggregated.total() == 45);
  for (const auto& f : a.folds) {
    CHECK(f.confusion.total() == 9);
    CHECK(std::filesystem::exists(f.checkpoint_path));
  }
  auto b = cross_validate(data, cfg, {}, 3);
  CHECK(a.aggregated == b.aggregated);
  for (std::size_t f = 0; f < 5; ++f) {
    CHECK(a.folds[f].micro.f1 == b.folds[f].micro.f1);
    CHECK(a.folds[f].epoch_loss == b.folds[f].epoch_loss);
  }
  double mean = 0;
  for (const auto& f : a.folds) mean += f.micro.f1 / 5;
  CHECK(a.average.f1 == doctest::Approx(mean).epsilon(1e-15));
}
