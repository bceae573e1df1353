#include <doctest.h>

#include <cmath>
#include <random>

#include "fgsgt/ops.hpp"
#include "fgsgt/verify/oracles.hpp"
#include "helpers.hpp"

using namespace fgsgt;
using fgsgt::testing::random_tensor;

TEST_SUITE("tensor") {

TEST_CASE("sum gives unit gradients") {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("quadratic gradient at [1, 2] is [2, 4]") {
  Tensor x({2}, {1.0, 2.0}, true);
  sum(mul(x, x)).backward();
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("a second backward accumulates the same gradient again") {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({4}, rng, -1, 1, true);
  Tensor loss = sum(mul(sigmoid(x), exp(x)));
  loss.backward();
  const std::vector<double> once(x.grad().begin(), x.grad().end());
  loss.backward();
  // Two paths reach x, so the sums are reassociated: equal up to rounding.
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(std::abs(x.grad()[i] - 2.0 * once[i]) <= 1e-15 * std::abs(once[i]));

  // A single path doubles bit-exactly.
  Tensor y({3}, {0.5, -1.0, 2.0}, true);
  Tensor l = sum(scale(y, 0.3));
  l.backward();
  l.backward();
  for (double g : y.grad()) CHECK(g == 0.6);
}

TEST_CASE("no-grad mode records no graph") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = mul(x, x);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
  CHECK(y.is_leaf());
}

TEST_CASE("detach copies values and cuts the graph") {
  Tensor x({2}, {1.0, 2.0}, true);
  Tensor d = scale(x, 3.0).detach();
  CHECK_FALSE(d.requires_grad());
  d.values_mut()[0] = 100;
  CHECK(x.values()[0] == 1.0);
}

TEST_CASE("shape mismatch is rejected") {
  CHECK_THROWS_AS(add(Tensor({2}), Tensor({3})), std::invalid_argument);
  CHECK_THROWS(Tensor({2, 2}, std::vector<double>{1, 2, 3}));
}

}  // TEST_SUITE

TEST_SUITE("ops") {

TEST_CASE("1x1 conv of weight 2 doubles the input") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w({1, 1, 1, 1}, {2.0});
  Tensor b({1}, {0.0});
  Tensor y = conv2d(x, w, b, ConvSpec::same(1, 1, 1, 1));
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (double v : y.values()) CHECK(v == 2.0);
}

TEST_CASE("zero weights and bias annihilate") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor y = conv2d(x, Tensor::zeros({3, 2, 3, 3}), Tensor::zeros({3}), ConvSpec::same(2, 3, 3, 3));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("strided dilated padded conv matches the loop oracle") {
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  ConvSpec spec{2, 3, 3, 3, 2, 2, 2, 2};
  Tensor y = conv2d(x, w, b, spec);
  const auto ref = oracle::conv2d(testing::vec(x), 1, 5, 5, testing::vec(w), testing::vec(b), spec);
  CHECK(y.shape() == Shape{1, 3, 3, 3});
  CHECK(testing::max_abs_diff(y.values(), ref) <= 1e-12);
}

TEST_CASE("leaky rectification") {
  Tensor x({3}, {2.0, -4.0, 0.0});
  Tensor y = leaky_relu(x, {0.25});
  CHECK(y.values()[0] == 2.0);
  CHECK(y.values()[1] == -1.0);
  CHECK(y.values()[2] == 0.0);
}

TEST_CASE("batched identities multiply to identities") {
  Tensor eye({2, 2, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  CHECK(testing::bit_equal(matmul_batched(eye, eye), eye));
  std::mt19937_64 rng(4);
  Tensor a = random_tensor({2, 3, 4}, rng);
  const Tensor z = matmul_batched(a, Tensor::zeros({2, 4, 5}));
  for (double v : z.values()) CHECK(v == 0.0);
  Tensor b = random_tensor({2, 4, 5}, rng);
  CHECK(testing::max_abs_diff(matmul_batched(a, b).values(), oracle::matmul(testing::vec(a), testing::vec(b), 2, 3, 4, 5)) <=
        1e-12);
}

TEST_CASE("softmax examples") {
  Tensor u = softmax(Tensor({3}, {0.7, 0.7, 0.7}), 0);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Tensor p = softmax(Tensor({2}, {0.0, std::log(3.0)}), 0);
  CHECK(std::abs(p.values()[0] - 0.25) <= 1e-15);
  CHECK(std::abs(p.values()[1] - 0.75) <= 1e-15);
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 5}, rng, -3, 3);
  Tensor shifted = softmax(add_scalar(x, 17.5), 1);
  CHECK(testing::max_abs_diff(softmax(x, 1).values(), shifted.values()) <= 1e-12);
}

TEST_CASE("upsampling") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(testing::bit_equal(upsample(x, 1, UpsampleMode::kNearest), x));
  CHECK(testing::bit_equal(upsample(x, 1, UpsampleMode::kBilinear), x));
  Tensor n = upsample(x, 2, UpsampleMode::kNearest);
  const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(std::vector<double>(n.values().begin(), n.values().end()) == want);
}

TEST_CASE("max pooling") {
  std::mt19937_64 rng(6);
  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  CHECK(testing::bit_equal(max_pool2d(x, 1, 1), x));
  Tensor y = max_pool2d(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), 2, 2);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == 4.0);
  CHECK(testing::vec(max_pool2d(x, 3, 2, 1)) == oracle::max_pool2d(testing::vec(x), 1, 2, 4, 4, 3, 2, 1));
}

TEST_CASE("batch norm in training mode standardises each channel") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({2, 3, 4, 4}, rng, -2, 5);
  Tensor gamma = Tensor::full({3}, 1.0), beta = Tensor::zeros({3});
  Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
  Tensor y = batch_norm(x, gamma, beta, rm, rv, {true, 0.1, 1e-5});
  const auto v = y.values();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t i = 0; i < 16; ++i) {
        const double e = v[(b * 3 + c) * 16 + i];
        s += e;
        s2 += e * e;
      }
    CHECK(std::abs(s / 32) <= 1e-12);
    CHECK(s2 / 32 == doctest::Approx(1.0).epsilon(1e-4));
  }
  for (double m : rm.values()) CHECK(m != 0.0);
}

}  // TEST_SUITE
