#include <doctest.h>

#include "pathvit/encoder.hpp"
#include "pathvit/errors.hpp"
#include "pathvit/gradcheck.hpp"
#include "pathvit/ops.hpp"
#include "pathvit/rng.hpp"

using namespace pathvit;

namespace {

encoder_config small(std::size_t depth = 1) {
  encoder_config c;
  c.image_size = 8;
  c.tile_size = 4;
  c.embed_dim = 8;
  c.depth = depth;
  c.heads = 2;
  c.registers = 2;
  c.mlp_ratio = 2;
  return c;
}

template <typename T>
basic_tensor<T> random_image(const encoder_config& c, std::uint64_t seed) {
  rng gen(seed);
  std::vector<T> v(c.channels * c.image_size * c.image_size);
  for (auto& x : v) x = static_cast<T>(gen.normal());
  return basic_tensor<T>::from({c.channels, c.image_size, c.image_size}, std::move(v));
}

}  // namespace

TEST_CASE("config validation") {
  encoder_config c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.patch_tokens() == 256);
  CHECK(c.sequence_length() == 261);
  c.tile_size = 15;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = {};
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), config_error);
}

TEST_CASE("tile_image layout") {
  encoder_config c;
  auto constant = tensor::full({3, 224, 224}, 0.25f);
  auto tiles = tile_image(constant, c);
  CHECK(tiles.shape() == shape_t{256, 588});
  for (float v : tiles.data()) CHECK(v == 0.25f);

  std::vector<float> v(3 * 224 * 224, 0.0f);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 14; ++y)
      for (std::size_t x = 0; x < 14; ++x) v[(ch * 224 + y) * 224 + x] = 1.0f;
  auto t = tile_image(tensor::from({3, 224, 224}, v), c);
  for (std::size_t r = 0; r < 256; ++r) {
    bool nonzero = false;
    for (std::size_t k = 0; k < 588; ++k) nonzero |= t.data()[r * 588 + k] != 0.0f;
    CHECK(nonzero == (r == 0));
  }
  CHECK_THROWS_AS(tile_image(tensor::zeros({3, 100, 100}), c), dimension_error);
}

TEST_CASE("tile rows are channel-major and tiles row-major") {
  auto c = small();
  std::vector<float> v(3 * 8 * 8);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i);
  auto t = tile_image(tensor::from({3, 8, 8}, v), c);
  // tile 1 is the top-right 4x4 block; its first entry is channel 0, (0, 4)
  CHECK(t.data()[1 * 48 + 0] == 4.0f);
  // channel 1 of tile 2 (bottom-left) starts at (1, 4, 0)
  CHECK(t.data()[2 * 48 + 16] == static_cast<float>((1 * 8 + 4) * 8));
}

TEST_CASE("embed order and zero cases") {
  auto c = small();
  auto w = encoder_weights<float>::init(c, 1);
  std::fill(w.position.mutable_data().begin(), w.position.mutable_data().end(), 0.0f);
  auto seq = embed(tensor::zeros({c.patch_tokens(), c.tile_dim()}), w, c);
  CHECK(seq.shape() == shape_t{c.sequence_length(), c.embed_dim});
  for (std::size_t j = 0; j < c.embed_dim; ++j) CHECK(seq.data()[j] == w.class_seed.data()[j]);
  for (std::size_t i = 1 + c.registers; i < seq.dim(0); ++i)
    for (std::size_t j = 0; j < c.embed_dim; ++j) CHECK(seq.data()[i * c.embed_dim + j] == 0.0f);
  CHECK(seq.data()[1 * c.embed_dim + 3] == w.register_seeds.data()[3]);
}

TEST_CASE("identity projection reproduces tiles") {
  encoder_config c = small();
  c.channels = 1;
  c.tile_size = 2;
  c.image_size = 4;
  c.embed_dim = 4;  // tile_dim
  auto w = encoder_weights<float>::zeros(c);
  auto proj = w.tile_projection.mutable_data();
  for (std::size_t i = 0; i < 4; ++i) proj[i * 4 + i] = 1.0f;
  std::vector<float> img(16);
  for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<float>(i + 1);
  auto tiles = tile_image(tensor::from({1, 4, 4}, img), c);
  auto seq = embed(tiles, w, c);
  for (std::size_t i = 0; i < tiles.size(); ++i) CHECK(seq.data()[(1 + c.registers) * 4 + i] == tiles.data()[i]);
}

TEST_CASE("default shapes") {
  for (std::size_t d : {8, 32}) {
    encoder_config c;
    c.embed_dim = d;
    auto w = encoder_weights<float>::init(c, 2);
    no_grad_guard guard;
    auto tokens = encode(random_image<float>(c, 3), w, c);
    CHECK(tokens.class_token.shape() == shape_t{1, d});
    CHECK(tokens.registers.shape() == shape_t{4, d});
    CHECK(tokens.patches.shape() == shape_t{256, d});
  }
}

TEST_CASE("depth 0 is embed plus final norm") {
  auto c = small(0);
  auto w = encoder_weights<double>::init(c, 4);
  auto img = random_image<double>(c, 5);
  auto tokens = encode(img, w, c);
  auto expect = layer_norm(embed(tile_image(img, c), w, c), w.final_gain, w.final_bias);
  auto got = concat<double>({tokens.class_token, tokens.registers, tokens.patches}, 0);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == expect.data()[i]);
}

TEST_CASE("patch tokens permute with tiles when positions are zero") {
  auto c = small(2);
  auto w = encoder_weights<double>::init(c, 6);
  std::fill(w.position.mutable_data().begin(), w.position.mutable_data().end(), 0.0);
  auto img = random_image<double>(c, 7);
  auto tiles = tile_image(img, c);
  std::vector<double> swapped(tiles.data().begin(), tiles.data().end());
  const std::size_t td = c.tile_dim();
  std::swap_ranges(swapped.begin(), swapped.begin() + td, swapped.begin() + 3 * td);
  auto a = encode_sequence(embed(tiles, w, c), w, c);
  auto b = encode_sequence(embed(tensor64::from(tiles.shape(), swapped), w, c), w, c);
  const std::size_t d = c.embed_dim;
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(a.patches.data()[0 * d + j] == doctest::Approx(b.patches.data()[3 * d + j]).epsilon(1e-12));
    CHECK(a.patches.data()[3 * d + j] == doctest::Approx(b.patches.data()[0 * d + j]).epsilon(1e-12));
    CHECK(a.patches.data()[1 * d + j] == doctest::Approx(b.patches.data()[1 * d + j]).epsilon(1e-12));
    CHECK(a.class_token.data()[j] == doctest::Approx(b.class_token.data()[j]).epsilon(1e-12));
  }
}

TEST_CASE("every weight receives gradient") {
  auto c = small(2);
  auto w = encoder_weights<double>::init(c, 8);
  auto tokens = encode(random_image<double>(c, 9), w, c);
  rng gen(10);
  auto all = concat<double>({tokens.class_token, tokens.registers, tokens.patches}, 0);
  std::vector<double> r(all.size());
  for (auto& x : r) x = gen.normal();
  backward(sum(mul(all, tensor64::from(all.shape(), r))));
  for (const auto& p : w.parameters()) {
    CAPTURE(p.name);
    REQUIRE(p.value.has_grad());
    bool nonzero = false;
    for (double g : p.value.grad()) nonzero |= g != 0.0;
    CHECK(nonzero);
  }
}

TEST_CASE("eval encode is bitwise deterministic") {
  encoder_config c;
  auto w = encoder_weights<float>::init(c, 11);
  auto img = random_image<float>(c, 12);
  no_grad_guard guard;
  auto a = encode(img, w, c), b = encode(img, w, c);
  CHECK(std::equal(a.patches.data().begin(), a.patches.data().end(), b.patches.data().begin()));
}

TEST_CASE("parameter naming and init") {
  auto c = small(2);
  auto w = encoder_weights<float>::init(c, 13);
  auto params = w.parameters();
  CHECK(params.front().name == "encoder.tile_projection");
  CHECK(params.back().name == "encoder.final_norm.bias");
  for (const auto& p : params) CHECK(p.value.requires_grad());
  auto again = encoder_weights<float>::init(c, 13);
  CHECK(std::equal(w.position.data().begin(), w.position.data().end(), again.position.data().begin()));
  double s = 0, s2 = 0;
  for (float v : w.position.data()) {
    s += v;
    s2 += double(v) * v;
  }
  const double n = static_cast<double>(w.position.size());
  CHECK(std::sqrt(s2 / n - (s / n) * (s / n)) == doctest::Approx(0.02).epsilon(0.3));
  CHECK_THROWS_AS(encode(random_image<float>(small(1), 1), w, small(1)), dimension_error);
}

TEST_CASE("encoder gradient check") {
  auto c = small(1);
  auto w = encoder_weights<double>::init(c, 14);
  auto img = random_image<double>(c, 15);
  auto f = [&](const tensor64& proj) {
    auto ww = w;
    ww.tile_projection = proj;
    auto t = encode(img, ww, c);
    return sum(mul(t.patches, t.patches));
  };
  CHECK(finite_diff_check<double>(f, w.tile_projection, 1e-5) < 1e-5);
}
