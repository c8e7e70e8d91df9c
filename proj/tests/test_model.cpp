#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "pathvit/errors.hpp"
#include "pathvit/model.hpp"
#include "pathvit/ops.hpp"
#include "pathvit/rng.hpp"
#include "temp_dir.hpp"

using namespace pathvit;

namespace {

model<float> tiny(std::uint64_t seed) {
  encoder_config e;
  e.embed_dim = 8;
  e.depth = 1;
  e.heads = 2;
  head_config h;
  h.embed_dim = 8;
  h.bottleneck = 4;
  return model<float>::init(e, h, seed);
}

std::vector<tensor> images(std::size_t n, std::uint64_t seed) {
  rng gen(seed);
  std::vector<tensor> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<float> v(3 * 224 * 224);
    for (auto& x : v) x = static_cast<float>(gen.normal());
    out.push_back(tensor::from({3, 224, 224}, std::move(v)));
  }
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("forward gives B x K logits") {
  auto m = tiny(1);
  auto imgs = images(2, 2);
  no_grad_guard guard;
  auto logits = m.forward(imgs, run_mode::eval, 0);
  CHECK(logits.shape() == shape_t{2, 9});
}

TEST_CASE("init rejects mismatched embed dims") {
  encoder_config e;
  head_config h;
  h.embed_dim = 16;
  CHECK_THROWS_AS(model<float>::init(e, h, 0), config_error);
}

TEST_CASE("freezing the encoder") {
  auto m = tiny(3);
  m.set_encoder_trainable(false);
  for (const auto& p : m.parameters()) CHECK(p.value.requires_grad() == (p.name.rfind("head.", 0) == 0));
}

TEST_CASE("checkpoint round trip restores identical logits") {
  test_dir dir("ckpt");
  auto m = tiny(4);
  const auto path = dir.path / "m.ckpt";
  save_checkpoint(m, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.encoder_cfg == m.encoder_cfg);
  CHECK(loaded.head_cfg == m.head_cfg);
  auto a = m.parameters(), b = loaded.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].value.data().begin(), a[i].value.data().end(), b[i].value.data().begin()));
  }
  auto imgs = images(2, 5);
  no_grad_guard guard;
  auto la = m.forward(imgs, run_mode::eval, 0), lb = loaded.forward(imgs, run_mode::eval, 0);
  CHECK(std::memcmp(la.data().data(), lb.data().data(), la.size() * sizeof(float)) == 0);
  save_checkpoint(loaded, dir.path / "again.ckpt");
  CHECK(slurp(path) == slurp(dir.path / "again.ckpt"));
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
}

TEST_CASE("checkpoint header lists name, shape and offset") {
  test_dir dir("ckpt_header");
  save_checkpoint(tiny(6), dir.path / "m.ckpt");
  const auto text = slurp(dir.path / "m.ckpt");
  CHECK(text.rfind("pathvit-checkpoint 1\n", 0) == 0);
  CHECK(text.find("encoder.tile_projection 2 588 8 0\n") != std::string::npos);
  CHECK(text.find("\n---\n") != std::string::npos);
}

TEST_CASE("checkpoint errors") {
  test_dir dir("ckpt_bad");
  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), io_error);

  const auto good = dir.path / "m.ckpt";
  save_checkpoint(tiny(7), good);
  const auto bytes = slurp(good);

  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(dir.path / name, std::ios::binary) << content;
    return dir.path / name;
  };
  CHECK_THROWS_AS(load_checkpoint(write("trunc.ckpt", bytes.substr(0, bytes.size() - 10))), parse_error);
  CHECK_THROWS_AS(load_checkpoint(write("magic.ckpt", "nonsense\n" + bytes)), parse_error);

  // Shape mismatch: claim the projection is 588x16.
  auto wrong = bytes;
  const std::string from = "encoder.tile_projection 2 588 8 0";
  wrong.replace(wrong.find(from), from.size(), "encoder.tile_projection 2 588 9 0");
  try {
    load_checkpoint(write("shape.ckpt", wrong));
    FAIL("no throw");
  } catch (const dimension_error& e) {
    CHECK(std::string(e.what()).find("encoder.tile_projection") != std::string::npos);
  }
}
