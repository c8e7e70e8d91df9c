#include <doctest.h>

#include "pathvit/errors.hpp"
#include "pathvit/ops.hpp"
#include "pathvit/tensor.hpp"

using namespace pathvit;

TEST_CASE("construction checks shape against data") {
  auto t = tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(tensor::from({2, 2}, {1, 2, 3}), dimension_error);
  CHECK(tensor::zeros({4}).data()[3] == 0.0f);
  CHECK(tensor::full({2}, 7.0f).data()[1] == 7.0f);
  CHECK(tensor::scalar(3.5f).item() == 3.5f);
  CHECK_THROWS_AS(t.item(), contract_error);
}

TEST_CASE("shape strings") {
  CHECK(shape_string({2, 3}) == "[2x3]");
  CHECK(shape_string({}) == "[]");
  CHECK(shape_size({}) == 1);
}

TEST_CASE("backward of sum gives ones") {
  auto x = tensor::from({3}, {1, -2, 5}, true);
  backward(sum(x));
  for (float g : x.grad()) CHECK(g == 1.0f);
}

TEST_CASE("backward of half squared norm gives x") {
  auto x = tensor64::from({4}, {0.5, -1.5, 2.0, 3.0}, true);
  backward(scale(sum(mul(x, x)), 0.5));
  for (std::size_t i = 0; i < 4; ++i) CHECK(x.grad()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("gradients accumulate until zeroed") {
  auto x = tensor::from({2}, {1, 2}, true);
  backward(sum(x));
  backward(sum(x));
  CHECK(x.grad()[0] == 2.0f);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0f);
}

TEST_CASE("backward of a sum equals the sum of backward passes") {
  auto x = tensor64::from({3}, {0.3, -0.7, 1.1}, true);
  auto f = [&] { return sum(silu(x)); };
  auto g = [&] { return sum(mul(x, x)); };
  backward(add(f(), g()));
  std::vector<double> joint(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(f());
  backward(g());
  for (std::size_t i = 0; i < 3; ++i) CHECK(joint[i] == doctest::Approx(x.grad()[i]).epsilon(1e-14));
}

TEST_CASE("each op is replayed once") {
  auto x = tensor::from({2}, {1, 2}, true);
  auto y = mul(x, x);
  auto loss = sum(add(y, y));  // y is shared
  CHECK(backward(loss) == 3);
  CHECK(x.grad()[0] == doctest::Approx(4.0f));
}

TEST_CASE("backward rejects non-scalars") {
  auto x = tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), contract_error);
}

TEST_CASE("no_grad records nothing") {
  auto x = tensor::from({2}, {1, 2}, true);
  tensor y;
  {
    no_grad_guard guard;
    CHECK_FALSE(grad_mode_enabled());
    y = mul(x, x);
  }
  CHECK(grad_mode_enabled());
  CHECK_FALSE(y.requires_grad());
  CHECK(backward(sum(y)) == 0);
}

TEST_CASE("interior tensors are read-only") {
  auto x = tensor::from({2}, {1, 2}, true);
  auto y = mul(x, x);
  CHECK_THROWS_AS(y.mutable_data(), contract_error);
  CHECK_THROWS_AS(y.set_requires_grad(false), contract_error);
  CHECK_NOTHROW(x.mutable_data()[0] = 3.0f);
}

TEST_CASE("detach and cast copy values") {
  auto x = tensor::from({2}, {1.25f, -2.5f}, true);
  auto d = x.detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.data()[1] == -2.5f);
  auto c = cast<double>(x, true);
  CHECK(c.requires_grad());
  CHECK(c.data()[0] == 1.25);
}
