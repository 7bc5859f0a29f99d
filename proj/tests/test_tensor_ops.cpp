#include <doctest.h>

#include "cscale/ops.hpp"
#include "cscale/tensor.hpp"
#include "helpers.hpp"

using namespace cscale;
using namespace testutil;

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Shape{}, ShapeError);
  CHECK_THROWS_AS(Shape({1, 2, 3, 4, 5}), ShapeError);
  CHECK_THROWS_AS(Shape({4, 0, 2}), ShapeError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>(3)), ShapeError);

  Tensor<float> t(Shape{2, 3, 4});
  CHECK(t.size() == 24);
  t.at(1, 2, 3) = 5.0f;
  CHECK(t[23] == 5.0f);
}

TEST_CASE("conv2d identity and bias cases") {
  Rng rng(1);
  Tensor<float> x = random_tensor<float>(Shape{5, 4, 3}, rng);

  // 1x1 identity kernel, zero bias: output equals input.
  Tensor<float> identity(Shape{1, 1, 3, 3});
  for (int c = 0; c < 3; ++c) identity.at(0, 0, c, c) = 1.0f;
  Tensor<float> out = conv2d_forward(x, identity, Tensor<float>(Shape{3}));
  CHECK(out.same_bytes(x));

  // All-zero kernel: every pixel of channel j equals bias j.
  Tensor<float> zero_kernel(Shape{3, 3, 3, 2});
  Tensor<float> bias(Shape{2}, {0.25f, -1.5f});
  out = conv2d_forward(x, zero_kernel, bias);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 4; ++j) {
      CHECK(out.at(i, j, 0) == 0.25f);
      CHECK(out.at(i, j, 1) == -1.5f);
    }
  }
}

TEST_CASE("conv2d matches the nested-loop reference") {
  Rng rng(2);
  Tensor<double> x = random_tensor<double>(Shape{5, 5, 2}, rng);
  Tensor<double> k = random_tensor<double>(Shape{3, 3, 2, 3}, rng);
  Tensor<double> b = random_tensor<double>(Shape{3}, rng);
  Tensor<double> fast = conv2d_forward(x, k, b);
  Tensor<double> slow = conv2d_reference(x, k, b);
  REQUIRE(fast.shape() == slow.shape());
  for (int64_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
}

TEST_CASE("conv2d shape errors name both shapes") {
  Rng rng(3);
  Tensor<float> x = random_tensor<float>(Shape{4, 4, 2}, rng);
  Tensor<float> k = random_tensor<float>(Shape{3, 3, 5, 2}, rng);
  try {
    conv2d_forward(x, k, Tensor<float>(Shape{2}));
    FAIL("expected shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(4,4,2)") != std::string::npos);
    CHECK(msg.find("(3,3,5,2)") != std::string::npos);
  }
  Tensor<float> even = random_tensor<float>(Shape{2, 2, 2, 2}, rng);
  CHECK_THROWS_AS(conv2d_forward(x, even, Tensor<float>(Shape{2})), ShapeError);
}

TEST_CASE("channel scaling basics") {
  Rng rng(4);
  Tensor<float> x = random_tensor<float>(Shape{4, 4, 3}, rng);

  Tensor<float> ones = Tensor<float>::full(Shape{3}, 1.0f);
  CHECK(channel_scaling_forward(x, ones).same_bytes(x));

  Tensor<float> zeros(Shape{3});
  Tensor<float> zeroed = channel_scaling_forward(x, zeros);
  for (int64_t i = 0; i < zeroed.size(); ++i) CHECK(zeroed[i] == 0.0f);

  // Elementwise broadcast-multiply oracle.
  Tensor<float> s = random_tensor<float>(Shape{3}, rng, 0.0, 1.0);
  Tensor<float> scaled = channel_scaling_forward(x, s);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int c = 0; c < 3; ++c) CHECK(scaled.at(i, j, c) == x.at(i, j, c) * s[c]);
    }
  }

  CHECK_THROWS_AS(channel_scaling_forward(x, Tensor<float>(Shape{2})), ShapeError);
  Tensor<float> bad(Shape{3}, {0.5f, 1.5f, 0.1f});
  CHECK_THROWS_AS(channel_scaling_forward(x, bad), ContractError);
  Tensor<float> negative(Shape{3}, {0.5f, -0.1f, 0.1f});
  CHECK_THROWS_AS(channel_scaling_forward(x, negative), ContractError);
}

TEST_CASE("relu sigmoid gap dense basics") {
  Tensor<float> v(Shape{2}, {-1.0f, 2.0f});
  Tensor<float> r = relu(v);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 2.0f);
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(-700.0) >= 0.0);  // stable under saturation
  CHECK(sigmoid(700.0) <= 1.0);

  // GAP of a constant channel is that constant.
  Tensor<float> x(Shape{3, 5, 2});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) {
      x.at(i, j, 0) = 2.5f;
      x.at(i, j, 1) = -0.5f;
    }
  }
  Tensor<float> g = global_average_pool(x);
  CHECK(g[0] == doctest::Approx(2.5f));
  CHECK(g[1] == doctest::Approx(-0.5f));

  // Dense with identity weights and zero bias passes the input through.
  Tensor<float> w(Shape{2, 2});
  w.at(0, 0) = 1.0f;
  w.at(1, 1) = 1.0f;
  Tensor<float> in(Shape{2}, {3.0f, -4.0f});
  Tensor<float> out = dense_forward(in, w, Tensor<float>(Shape{2}));
  CHECK(out.same_bytes(in));
}

TEST_CASE("max pool requires even extents and routes ties to the first cell") {
  Rng rng(5);
  CHECK_THROWS_AS(max_pool_2x2(random_tensor<float>(Shape{3, 4, 1}, rng)), ShapeError);

  Tensor<float> x(Shape{2, 2, 1}, {1.0f, 1.0f, 1.0f, 1.0f});
  std::vector<int64_t> argmax;
  Tensor<float> out = max_pool_2x2(x, &argmax);
  CHECK(out.size() == 1);
  CHECK(out[0] == 1.0f);
  CHECK(argmax[0] == 0);  // first in row-major window order

  Tensor<float> y = random_tensor<float>(Shape{4, 4, 2}, rng);
  Tensor<float> pooled = max_pool_2x2(y);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int c = 0; c < 2; ++c) {
        const float expect = std::max(std::max(y.at(2 * i, 2 * j, c), y.at(2 * i, 2 * j + 1, c)),
                                      std::max(y.at(2 * i + 1, 2 * j, c), y.at(2 * i + 1, 2 * j + 1, c)));
        CHECK(pooled.at(i, j, c) == expect);
      }
    }
  }
}

TEST_CASE("relu commutes with nonnegative channel scaling exactly") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<float> x = random_tensor<float>(Shape{6, 6, 4}, rng, -2.0, 2.0);
    Tensor<float> s = random_tensor<float>(Shape{4}, rng, 0.0, 1.0);
    Tensor<float> a = relu(channel_scaling_forward(x, s));
    Tensor<float> b = channel_scaling_forward(relu(x), s);
    CHECK(a.same_bytes(b));
  }
}

TEST_CASE("conv2d is linear in the kernel") {
  Rng rng(7);
  Tensor<float> x = random_tensor<float>(Shape{6, 6, 2}, rng);
  Tensor<float> k1 = random_tensor<float>(Shape{3, 3, 2, 3}, rng);
  Tensor<float> k2 = random_tensor<float>(Shape{3, 3, 2, 3}, rng);
  const float a = 0.7f, b = -1.3f;

  Tensor<float> mixed(k1.shape());
  for (int64_t i = 0; i < mixed.size(); ++i) mixed[i] = a * k1[i] + b * k2[i];
  Tensor<float> zero_bias(Shape{3});

  Tensor<float> lhs = conv2d_forward(x, mixed, zero_bias);
  Tensor<float> c1 = conv2d_forward(x, k1, zero_bias);
  Tensor<float> c2 = conv2d_forward(x, k2, zero_bias);
  for (int64_t i = 0; i < lhs.size(); ++i) {
    const double rhs = a * static_cast<double>(c1[i]) + b * static_cast<double>(c2[i]);
    CHECK(rel_err(lhs[i], rhs, 1e-2) <= 1e-5);
  }
}

TEST_CASE("scaling a kernel slice and bias equals scaling the conv output channel") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> x = random_tensor<double>(Shape{5, 5, 2}, rng);
    Tensor<double> k = random_tensor<double>(Shape{3, 3, 2, 3}, rng);
    Tensor<double> b = random_tensor<double>(Shape{3}, rng);
    const double s = rng.uniform(0.0, 1.0);
    const int target = rng.uniform_int(0, 2);

    Tensor<double> k_scaled = k;
    Tensor<double> b_scaled = b;
    for (int di = 0; di < 3; ++di) {
      for (int dj = 0; dj < 3; ++dj) {
        for (int ic = 0; ic < 2; ++ic) k_scaled.at(di, dj, ic, target) *= s;
      }
    }
    b_scaled[target] *= s;

    Tensor<double> folded = conv2d_forward(x, k_scaled, b_scaled);
    Tensor<double> plain = conv2d_forward(x, k, b);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        CHECK(rel_err(folded.at(i, j, target), s * plain.at(i, j, target), 1e-9) <= 1e-6);
      }
    }
  }
}

TEST_CASE("forward operators are deterministic bitwise") {
  Rng rng_a(99), rng_b(99);
  Tensor<float> xa = random_tensor<float>(Shape{6, 6, 3}, rng_a);
  Tensor<float> xb = random_tensor<float>(Shape{6, 6, 3}, rng_b);
  CHECK(xa.same_bytes(xb));
  Tensor<float> ka = random_tensor<float>(Shape{3, 3, 3, 4}, rng_a);
  Tensor<float> kb = random_tensor<float>(Shape{3, 3, 3, 4}, rng_b);
  Tensor<float> bias(Shape{4});
  CHECK(conv2d_forward(xa, ka, bias).same_bytes(conv2d_forward(xb, kb, bias)));
}
