#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "skillnet/ops.hpp"
#include "skillnet/tensor.hpp"

using namespace skillnet;
using skillnet::testing::check_gradients;
using skillnet::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3}), ShapeError);
  auto t = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(t.numel() == 4);
  CHECK(t.rank() == 2);
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("matmul small cases") {
  auto id = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto b = Tensor::from({2, 2}, {3, 4, 5, 6});
  CHECK(values(matmul(id, b)) == std::vector<double>{3, 4, 5, 6});

  auto row = Tensor::from({1, 2}, {1, 2});
  auto col = Tensor::from({2, 1}, {3, 4});
  auto c = matmul(row, col);
  CHECK(c.shape() == Shape{1, 1});
  CHECK(c.item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3] x [2, 3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches central differences") {
  auto a = random_tensor({4, 5}, 1);
  auto b = random_tensor({5, 3}, 2);
  auto result = check_gradients([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(result.max_relative_error < 1e-6);
}

TEST_CASE("softmax values") {
  auto uniform = softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  auto big = softmax(Tensor::from({2}, {1000, 0}), 0);
  CHECK(big.at(0) == 1.0);
  CHECK(big.at(1) >= 0.0);
  CHECK(big.at(1) < 1e-300);

  auto s = softmax(Tensor::from({3}, {1, 2, 3}), 0);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(s.at(0) == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s.at(1) == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s.at(2) == doctest::Approx(0.66524).epsilon(1e-4));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s.at(i) - std::exp(i + 1.0) / z) < 1e-15);
}

TEST_CASE("softmax sums to one along any axis") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto x = random_tensor({3, 4, 5}, seed, -30.0, 30.0);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto s = softmax(x, axis);
      const auto& shape = x.shape();
      std::size_t inner = 1;
      for (std::size_t d = axis + 1; d < 3; ++d) inner *= shape[d];
      const std::size_t len = shape[axis];
      const std::size_t outer = x.numel() / (len * inner);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          double total = 0.0;
          for (std::size_t j = 0; j < len; ++j) total += s.at(o * len * inner + j * inner + in);
          CHECK(std::abs(total - 1.0) < 1e-12);
        }
      }
    }
  }
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 2), ShapeError);
}

TEST_CASE("softmax gradient on every axis") {
  auto x = random_tensor({2, 3, 4}, 7);
  auto w = random_tensor({2, 3, 4}, 8);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto r = check_gradients([&] { return sum(mul(softmax(x, axis), w)); }, {x});
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("layer_norm values") {
  auto gain = Tensor::full({4}, 1.0);
  auto bias = Tensor::zeros({4});
  auto constant = layer_norm(Tensor::full({4}, 3.5), gain, bias, 1e-5);
  for (double v : constant.data()) CHECK(v == 0.0);

  auto two = layer_norm(Tensor::from({2}, {1, 3}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0);
  CHECK(values(two) == std::vector<double>{-1.0, 1.0});
}

TEST_CASE("layer_norm gradient") {
  auto x = random_tensor({2, 8}, 11);
  auto gain = random_tensor({8}, 12, 0.5, 1.5);
  auto bias = random_tensor({8}, 13);
  auto w = random_tensor({2, 8}, 14);
  auto r = check_gradients([&] { return sum(mul(layer_norm(x, gain, bias, 1e-5), w)); }, {x, gain, bias});
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("cross_entropy limits and masking") {
  const int pad = 0;
  SUBCASE("peaked logits give near-zero loss") {
    auto logits = Tensor::from({1, 2, 4}, {0, 0, 60, 0, 0, 0, 0, 60});
    std::vector<int> targets{2, 3};
    CHECK(cross_entropy(logits, targets, pad).item() < 1e-20);
  }
  SUBCASE("uniform logits give ln V") {
    auto logits = Tensor::zeros({2, 3, 8});
    std::vector<int> targets{1, 2, 3, 4, 5, 6};
    CHECK(cross_entropy(logits, targets, pad).item() == doctest::Approx(std::log(8.0)).epsilon(1e-14));
    CHECK(std::log(8.0) == doctest::Approx(2.0794).epsilon(1e-4));
  }
  SUBCASE("all-pad targets give zero loss and zero gradient") {
    auto logits = random_tensor({1, 3, 5}, 3);
    logits.set_requires_grad(true);
    std::vector<int> targets{pad, pad, pad};
    GradientTape tape;
    TapeScope scope(tape);
    auto loss = cross_entropy(logits, targets, pad);
    CHECK(loss.item() == 0.0);
    tape.backward(loss);
    for (double g : logits.grad()) CHECK(g == 0.0);
  }
  SUBCASE("out-of-range target") {
    std::vector<int> targets{9};
    CHECK_THROWS_AS(cross_entropy(Tensor::zeros({1, 4}), targets, pad), std::out_of_range);
  }
}

TEST_CASE("cross_entropy gradient ignores pad rows") {
  auto logits = random_tensor({2, 3, 6}, 21, -3, 3);
  std::vector<int> targets{1, 5, 0, 2, 0, 0};
  auto r = check_gradients([&] { return cross_entropy(logits, targets, 0); }, {logits});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("backward basics") {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  GradientTape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(x));
  }
  CHECK(values(Tensor::from({3}, {x.grad().begin(), x.grad().end()})) == std::vector<double>{1, 1, 1});

  SUBCASE("second backward without reset is an error") {
    TapeScope scope(tape);
    auto y = Tensor::from({1}, {2}, true);
    CHECK_THROWS_AS(tape.backward(sum(y)), std::logic_error);
    tape.reset();
    CHECK_NOTHROW(tape.backward(sum(y)));
  }
  SUBCASE("non-scalar loss") {
    GradientTape t2;
    TapeScope scope(t2);
    auto y = Tensor::from({2}, {1, 2}, true);
    CHECK_THROWS_AS(t2.backward(scale(y, 2.0)), ShapeError);
  }
}

TEST_CASE("unused parameter keeps an absent gradient") {
  auto x = random_tensor({2, 3}, 5);
  auto w = random_tensor({3, 2}, 6);
  auto z = random_tensor({3, 2}, 7);
  w.set_requires_grad(true);
  z.set_requires_grad(true);
  GradientTape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(matmul(x, w)));
  }
  CHECK(w.has_grad());
  CHECK_FALSE(z.has_grad());
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("no tape means no recording") {
  auto w = Tensor::from({2}, {1, 2}, true);
  auto y = scale(w, 3.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("elementwise op gradients") {
  auto a = random_tensor({3, 4}, 31);
  auto b = random_tensor({3, 4}, 32);
  auto bias = random_tensor({4}, 33);
  auto w = random_tensor({3, 4}, 34);
  auto table = random_tensor({6, 4}, 35);
  std::vector<int> ids{0, 3, 3, 5, 1};
  auto proj = random_tensor({5, 4}, 36);

  auto weighted = [&](const Tensor& t) { return sum(mul(t, w)); };
  CHECK(check_gradients([&] { return weighted(add(a, b)); }, {a, b}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(sub(a, b)); }, {a, b}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(mul(a, b)); }, {a, b}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(scale(a, -2.5)); }, {a}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(add_bias(a, bias)); }, {a, bias}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(gelu(a)); }, {a}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(relu(a)); }, {a}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return weighted(transpose(transpose(a))); }, {a}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return sum(mul(reshape(a, {4, 3}), reshape(w, {4, 3}))); }, {a}).max_relative_error <
        1e-6);
  CHECK(check_gradients([&] { return mean(mul(a, a)); }, {a}).max_relative_error < 1e-6);
  CHECK(check_gradients([&] { return sum(mul(embedding(table, ids), proj)); }, {table}).max_relative_error < 1e-6);
}

TEST_CASE("attention gradient with masks") {
  AttentionLayout layout;
  layout.batch = 2;
  layout.query_len = 3;
  layout.key_len = 4;
  layout.heads = 2;
  layout.key_valid = {1, 1, 1, 0, 1, 1, 0, 0};
  auto q = random_tensor({6, 4}, 41);
  auto k = random_tensor({8, 4}, 42);
  auto v = random_tensor({8, 4}, 43);
  auto w = random_tensor({6, 4}, 44);
  auto r = check_gradients([&] { return sum(mul(attention(q, k, v, layout), w)); }, {q, k, v});
  CHECK(r.max_relative_error < 1e-6);

  layout.query_len = 4;
  layout.causal = true;
  auto q2 = random_tensor({8, 4}, 45);
  auto w2 = random_tensor({8, 4}, 46);
  auto r2 = check_gradients([&] { return sum(mul(attention(q2, k, v, layout), w2)); }, {q2, k, v});
  CHECK(r2.max_relative_error < 1e-6);
}

TEST_CASE("attention ignores masked keys") {
  AttentionLayout layout;
  layout.batch = 1;
  layout.query_len = 2;
  layout.key_len = 3;
  layout.heads = 1;
  layout.key_valid = {1, 1, 0};
  auto q = random_tensor({2, 2}, 51);
  auto k = random_tensor({3, 2}, 52);
  auto v = random_tensor({3, 2}, 53);
  auto base = attention(q, k, v, layout);
  auto k2 = k.clone();
  auto v2 = v.clone();
  k2.mutable_data()[4] = 100.0;
  v2.mutable_data()[5] = -7.0;
  auto moved = attention(q, k2, v2, layout);
  CHECK(values(base) == values(moved));
}

TEST_CASE("finite checks surface NaN") {
  set_finite_checks(true);
  auto x = Tensor::from({1}, {std::nan("")});
  CHECK_THROWS_AS(scale(x, 1.0), NonFiniteError);
  set_finite_checks(false);
  CHECK_NOTHROW(scale(x, 1.0));
}
