#include <doctest.h>

#include <random>

#include "fgsgt/saliency.hpp"
#include "helpers.hpp"

using namespace fgsgt;
using namespace fgsgt::saliency;
using testing::random_tensor;

namespace {

SaliencyConfig small_config(std::size_t steps) {
  SaliencyConfig cfg;
  cfg.level_channels = {2, 3, 2, 2, 3};
  cfg.channels = 3;
  cfg.phi_hidden = 4;
  cfg.steps = steps;
  return cfg;
}

std::vector<Tensor> conv_outs(std::mt19937_64& rng) {
  const std::array<std::size_t, 5> ext{16, 8, 4, 4, 4};
  const std::array<std::size_t, 5> ch{2, 3, 2, 2, 3};
  std::vector<Tensor> outs;
  for (std::size_t i = 0; i < 5; ++i) outs.push_back(random_tensor({1, ch[i], ext[i], ext[i]}, rng));
  return outs;
}

void zero_phi(SaliencyParams& p) {
  for (auto& b : p.blocks)
    for (Conv2d* c : {&b.conv1, &b.conv2, &b.conv3}) {
      testing::fill(c->weight, 0.0);
      testing::fill(c->bias, 0.0);
    }
}

}  // namespace

TEST_SUITE("saliency") {

TEST_CASE("integrated features live on the Conv1 grid") {
  SaliencyConfig cfg = small_config(2);
  cfg.level_channels = {1, 1, 1, 1, 1};
  ParamStore store;
  Initializer init(1);
  auto p = SaliencyParams::create(store, "srrb.", cfg, init);
  std::mt19937_64 rng(1);
  std::vector<Tensor> outs;
  for (std::size_t e : {32, 16, 8, 4, 2}) outs.push_back(random_tensor({1, 1, e, e}, rng));
  auto f = build_integrated(outs, p.integrate);
  CHECK(f.f_low.shape() == Shape{1, 3, 32, 32});
  CHECK(f.f_high.shape() == Shape{1, 3, 32, 32});
}

TEST_CASE("zero inputs give zero integrated features and a uniform S0") {
  ParamStore store;
  Initializer init(2);
  auto p = SaliencyParams::create(store, "srrb.", small_config(2), init);
  std::mt19937_64 rng(2);
  auto outs = conv_outs(rng);
  for (Tensor& t : outs) testing::fill(t, 0.0);
  auto f = build_integrated(outs, p.integrate);
  for (double v : f.f_low.values()) CHECK(v == 0.0);
  for (double v : f.f_high.values()) CHECK(v == 0.0);
  auto s0 = predict_s0(f.f_high, p.s0_head);
  CHECK(s0.prob.shape() == Shape{1, 1, 16, 16});
  for (double v : s0.prob.values()) CHECK(v == 0.5);
}

TEST_CASE("raising the head bias raises every pixel") {
  ParamStore store;
  Initializer init(3);
  auto p = SaliencyParams::create(store, "srrb.", small_config(2), init);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor f = random_tensor({1, 3, 6, 6}, rng, -2, 2);
    Conv2d head = p.s0_head;
    const auto lo = predict_s0(f, head).prob.detach();
    head.bias = Tensor({1}, {head.bias.values()[0] + 0.1});
    const auto hi = predict_s0(f, head).prob;
    for (std::size_t i = 0; i < lo.numel(); ++i) CHECK(hi.values()[i] > lo.values()[i]);
  }
}

TEST_CASE("zero residue reproduces the previous map bit-exactly") {
  for (std::size_t n : {0, 1, 2, 5}) {
    CAPTURE(n);
    ParamStore store;
    Initializer init(4 + n);
    auto p = SaliencyParams::create(store, "srrb.", small_config(n), init);
    zero_phi(p);
    std::mt19937_64 rng(4);
    auto f = build_integrated(conv_outs(rng), p.integrate);
    auto s0 = predict_s0(f.f_high, p.s0_head);
    auto r = refine(s0, f, n, p.blocks);
    REQUIRE(r.maps.size() == n);
    for (const auto& m : r.maps) {
      CHECK(testing::bit_equal(m.prob, s0.prob));
      CHECK(testing::bit_equal(m.logits, s0.logits));
    }
    CHECK(testing::bit_equal(r.final_or(s0).prob, s0.prob));
  }
}

TEST_CASE("a positive residue on a uniform half map brightens it") {
  ParamStore store;
  Initializer init(5);
  auto p = SaliencyParams::create(store, "srrb.", small_config(1), init);
  zero_phi(p);
  p.blocks[0].conv3.bias.values_mut()[0] = 0.5;
  SaliencyMap s{Tensor::zeros({1, 1, 4, 4}), Tensor::full({1, 1, 4, 4}, 0.5)};
  std::mt19937_64 rng(5);
  auto out = srrb_step(s, random_tensor({1, 3, 4, 4}, rng), p.blocks[0]);
  const double want = 1 / (1 + std::exp(-0.5));
  for (double v : out.prob.values()) {
    CHECK(v > 0.5);
    CHECK(std::abs(v - want) <= 1e-15);
  }
}

TEST_CASE("odd steps read F_low and even steps read F_high") {
  ParamStore store;
  Initializer init(6);
  auto p = SaliencyParams::create(store, "srrb.", small_config(2), init);
  std::mt19937_64 rng(6);
  auto f = build_integrated(conv_outs(rng), p.integrate);
  auto s0 = predict_s0(f.f_high, p.s0_head);
  auto base = refine(s0, f, 2, p.blocks);
  CHECK(base.sources == std::vector<FeatureSource>{FeatureSource::kLow, FeatureSource::kHigh});

  // Sentinel perturbations: a changed F_high must leave S_1 untouched.
  IntegratedFeatures hi{f.f_low, add_scalar(f.f_high, 3.0)};
  auto r_hi = refine(s0, hi, 2, p.blocks);
  CHECK(testing::bit_equal(r_hi.maps[0].prob, base.maps[0].prob));
  CHECK_FALSE(testing::bit_equal(r_hi.maps[1].prob, base.maps[1].prob));
  IntegratedFeatures lo{add_scalar(f.f_low, 3.0), f.f_high};
  auto r_lo = refine(s0, lo, 2, p.blocks);
  CHECK_FALSE(testing::bit_equal(r_lo.maps[0].prob, base.maps[0].prob));

  auto five = refine(s0, f, 5, SaliencyParams::create(store, "five.", small_config(5), init).blocks);
  CHECK(five.sources == std::vector<FeatureSource>{FeatureSource::kLow, FeatureSource::kHigh, FeatureSource::kLow,
                                                   FeatureSource::kHigh, FeatureSource::kLow});
  CHECK(refine(s0, f, 0, p.blocks).maps.empty());
}

TEST_CASE("maps stay inside [0, 1] for large parameters") {
  ParamStore store;
  Initializer init(7);
  auto p = SaliencyParams::create(store, "srrb.", small_config(2), init);
  for (const auto& nt : store.params())
    for (double& v : Tensor(nt.tensor).values_mut()) v *= 40;
  std::mt19937_64 rng(7);
  auto f = build_integrated(conv_outs(rng), p.integrate);
  auto s0 = predict_s0(f.f_high, p.s0_head);
  for (const auto& m : refine(s0, f, 2, p.blocks).maps)
    for (double v : m.prob.values()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("grid mismatch is rejected") {
  ParamStore store;
  Initializer init(8);
  auto p = SaliencyParams::create(store, "srrb.", small_config(1), init);
  SaliencyMap s{Tensor::zeros({1, 1, 4, 4}), Tensor::full({1, 1, 4, 4}, 0.5)};
  CHECK_THROWS_AS(srrb_step(s, Tensor::zeros({1, 3, 5, 4}), p.blocks[0]), std::invalid_argument);
}

TEST_CASE("box target is a smoothed mask of covered cell centres") {
  // Box [2, 4] x [2, 4] covers the centres of cells 2 and 3 on each axis.
  Tensor t = box_saliency_target(6, 6, 1.0, {3, 3, 2, 2});
  auto at = [&](std::size_t r, std::size_t c) { return t.values()[r * 6 + c]; };
  CHECK(std::abs(at(2, 2) - 4.0 / 9.0) <= 1e-15);
  CHECK(std::abs(at(1, 1) - 1.0 / 9.0) <= 1e-15);
  CHECK(std::abs(at(1, 2) - 2.0 / 9.0) <= 1e-15);
  CHECK(at(0, 0) == 0.0);
  CHECK(at(5, 5) == 0.0);
  CHECK_FALSE(t.requires_grad());
}

TEST_CASE("grey conversion spans 0..255") {
  Tensor p({1, 1, 1, 3}, {0.0, 0.5, 1.0});
  CHECK(to_gray(p) == std::vector<unsigned char>{0, 128, 255});
}

}  // TEST_SUITE
