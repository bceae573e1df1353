#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fgsgt/losses.hpp"
#include "fgsgt/verify/oracles.hpp"
#include "helpers.hpp"
#include "metric_checks.hpp"

using namespace fgsgt;
using namespace fgsgt::losses;

TEST_SUITE("losses") {

TEST_CASE("classification hand values") {
  CHECK(std::abs(cls_loss(Tensor({1}, {0.5}), {1}).item() - 0.5 * std::numbers::ln2) <= 1e-10);
  CHECK(cls_loss(Tensor({3}, {1.0, 0.0, 1.0}), {1, 0, 1}).item() < 1e-6);
  std::mt19937_64 rng(1);
  Tensor u = testing::random_tensor({6}, rng, 0.05, 0.95);
  const std::vector<double> y{1, 0, 0, 1, 1, 0};
  std::vector<double> flipped;
  for (double v : y) flipped.push_back(1 - v);
  Tensor u2 = add_scalar(scale(u, -1.0), 1.0);
  CHECK(std::abs(cls_loss(u, y).item() - cls_loss(u2, flipped).item()) <= 1e-12);
  CHECK_THROWS_AS(cls_loss(Tensor({1}, {0.5}), {0.5}), std::invalid_argument);
}

TEST_CASE("regression indicator and perfect box") {
  const std::vector<BBox> anchors{{0, 0, 4, 4}, {3, 1, 2, 6}};
  const std::vector<BBox> gt{{1, 0, 5, 3}, {2, 2, 3, 3}};
  std::mt19937_64 rng(2);
  Tensor d = testing::random_tensor({2, 4}, rng);
  CHECK(reg_loss(d, anchors, gt, {0, 0}, {}).item() == 0.0);

  const auto t = encode_deltas(gt[0], anchors[0]);
  Tensor exact({1, 4}, {t[0], t[1], t[2], t[3]});
  CHECK(std::abs(reg_loss(exact, {anchors[0]}, {gt[0]}, {1}, {}).item()) <= 1e-15);
}

TEST_CASE("half-side offset of unit squares") {
  const BBox unit{0, 0, 1, 1};
  Tensor d({1, 4}, {0.5, 0.0, 0.0, 0.0});
  const double want_iou = oracle::box_iou(decode_deltas({0.5, 0, 0, 0}, unit), unit);
  CHECK(std::abs(want_iou - 1.0 / 3.0) <= 1e-15);
  const double want = (1 - want_iou) + 0.5 / 4;
  CHECK(std::abs(reg_loss(d, {unit}, {unit}, {1}, {}).item() - want) <= 1e-15);
}

TEST_CASE("regression is invariant to joint translation") {
  std::mt19937_64 rng(3);
  Tensor d = testing::random_tensor({3, 4}, rng, -0.2, 0.2);
  std::vector<BBox> a{{10, 10, 8, 8}, {20, 12, 6, 10}, {5, 30, 9, 4}}, g{{11, 9, 7, 9}, {19, 13, 7, 8}, {6, 31, 8, 5}};
  const double base = reg_loss(d, a, g, {1, 1, 0}, {}).item();
  for (auto* v : {&a, &g})
    for (BBox& b : *v) b.cx += 37, b.cy -= 11;
  CHECK(reg_loss(d, a, g, {1, 1, 0}, {}).item() == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS_AS(reg_loss(d, a, {{0, 0, 0, 1}, g[1], g[2]}, {1, 1, 0}, {}), std::invalid_argument);
}

TEST_CASE("saliency hand values") {
  Tensor gt({1, 1, 2, 2}, {1, 0, 0, 1});
  auto one = sal_loss({Tensor::full({1, 1, 2, 2}, 0.5)}, gt, {1.0});
  CHECK(std::abs(one.value.item() - std::numbers::ln2) <= 1e-10);
  CHECK(sal_loss({gt}, gt, {1.0}).value.item() < 1e-6);
  std::mt19937_64 rng(4);
  std::vector<Tensor> maps{testing::random_tensor({1, 1, 2, 2}, rng, 0.1, 0.9),
                           testing::random_tensor({1, 1, 2, 2}, rng, 0.1, 0.9)};
  const double a = sal_loss(maps, gt, {0.7, 1.3}).value.item();
  const double b = sal_loss(maps, gt, {1.4, 2.6}).value.item();
  CHECK(std::abs(b - 2 * a) <= 1e-12);
  CHECK_THROWS(sal_loss({Tensor::full({1, 1, 3, 2}, 0.5)}, gt, {1.0}));
}

TEST_CASE("total is the weighted sum") {
  LossWeights w;
  w.lambda_cls = w.lambda_reg = w.lambda_sal = 1;
  SalLoss s{Tensor::scalar(0.5), {0.5}};
  auto t = total_loss(Tensor::scalar(0.2), Tensor::scalar(0.3), s, w);
  CHECK(t.value.item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t.breakdown.l_reg == 0.3);
  w.lambda_sal = 0;
  SalLoss other{Tensor::scalar(9.0), {9.0}};
  CHECK(total_loss(Tensor::scalar(0.2), Tensor::scalar(0.3), other, w).value.item() == t.value.item() - 0.5);
  LossWeights bad;
  bad.lambda_reg = -1;
  CHECK_THROWS(bad.validate());
}

}  // TEST_SUITE

TEST_SUITE("metrics") {

TEST_CASE("five-frame toy matches the hand count") {
  const auto r = testing::toy_hand_counts();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("monotone and invariant over random trajectories") {
  const auto r = testing::random_properties(300, 11);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("malformed trajectories are rejected") {
  metrics::Trajectory empty;
  CHECK_THROWS(metrics::success_auc(empty));
  metrics::Trajectory zero{{{0, 0, 1, 1}}, {{0, 0, 0, 1}}};
  CHECK_THROWS(metrics::norm_precision(zero));
  metrics::Trajectory ragged{{{0, 0, 1, 1}, {0, 0, 1, 1}}, {{0, 0, 1, 1}}};
  CHECK_THROWS(metrics::precision_at(ragged));
}

}  // TEST_SUITE
