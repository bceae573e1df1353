#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fgsgt/bilinear_fusion.hpp"
#include "fgsgt/fgpcb.hpp"
#include "fgsgt/verify/oracles.hpp"
#include "helpers.hpp"

using namespace fgsgt;
using testing::random_tensor;
using testing::vec;

namespace {

fgpcb::FgpcbConfig small_config() {
  fgpcb::FgpcbConfig cfg;
  cfg.in_channels = 8;
  cfg.branch_width = 4;
  cfg.out_channels = 6;
  return cfg;
}

// Non-trivial batch-norm statistics so that eval mode is not a plain copy.
void randomise_bn(ParamStore& store, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5), c(-0.3, 0.3);
  for (const auto& nt : store.all()) {
    Tensor t = nt.tensor;
    const bool var = nt.name.ends_with("running_var") || nt.name.ends_with("gamma");
    const bool shift = nt.name.ends_with("running_mean") || nt.name.ends_with("beta") || nt.name.ends_with("bias");
    if (!var && !shift) continue;
    for (double& v : t.values_mut()) v = var ? u(rng) : c(rng);
  }
}

// conv -> inference batch norm -> leaky, written out from the loop oracle.
std::vector<double> unit_oracle(const std::vector<double>& x, std::size_t H, std::size_t W, const ConvBnAct& u) {
  auto y = oracle::conv2d(x, 1, H, W, vec(u.conv.weight), vec(u.conv.bias), u.conv.spec);
  const std::size_t C = u.conv.spec.out_channels, n = y.size() / C;
  for (std::size_t c = 0; c < C; ++c) {
    const double m = u.bn.running_mean.values()[c], v = u.bn.running_var.values()[c];
    const double g = u.bn.gamma.values()[c], b = u.bn.beta.values()[c];
    for (std::size_t i = 0; i < n; ++i) {
      double& e = y[c * n + i];
      e = (e - m) / std::sqrt(v + u.bn.eps) * g + b;
      if (e < 0) e *= u.act.alpha;
    }
  }
  return y;
}

std::vector<double> plus(std::vector<double> a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace

TEST_SUITE("fgpcb") {

TEST_CASE("stage shapes and residual closure") {
  ParamStore store;
  Initializer init(1);
  auto params = fgpcb::FgpcbParams::create(store, "fgpcb.", small_config(), init);
  std::mt19937_64 rng(1);
  Tensor f = random_tensor({1, 8, 16, 16}, rng);
  auto out = fgpcb::forward(f, params, false);
  CHECK(out.x.shape() == Shape{1, 6, 8, 8});
  CHECK(out.y.shape() == out.x.shape());
  CHECK(out.z.shape() == out.y.shape());
}

TEST_CASE("zero input gives zero outputs in inference mode") {
  ParamStore store;
  Initializer init(2);
  auto params = fgpcb::FgpcbParams::create(store, "fgpcb.", small_config(), init);
  auto out = fgpcb::forward(Tensor::zeros({1, 8, 16, 16}), params, false);
  for (const Tensor* t : {&out.x, &out.y, &out.z})
    for (double v : t->values()) CHECK(v == 0.0);
}

TEST_CASE("repeat forwards are bit-identical") {
  std::mt19937_64 rng(3);
  Tensor f = random_tensor({1, 8, 16, 16}, rng);
  auto run = [&] {
    ParamStore store;
    Initializer init(9);
    auto params = fgpcb::FgpcbParams::create(store, "fgpcb.", small_config(), init);
    return fgpcb::forward(f, params, false).z;
  };
  CHECK(testing::bit_equal(run(), run()));
}

TEST_CASE("stages match a composition of loop oracles") {
  ParamStore store;
  Initializer init(4);
  auto params = fgpcb::FgpcbParams::create(store, "fgpcb.", small_config(), init);
  std::mt19937_64 rng(4);
  randomise_bn(store, rng);
  Tensor f = random_tensor({1, 8, 8, 8}, rng);
  auto out = fgpcb::forward(f, params, false);

  // Stage 1: concat the branches, 1x3 then 3x1, add the residual, then pool.
  const auto& s1 = params.stage1;
  auto a = unit_oracle(vec(f), 8, 8, s1.conv1x1);
  const auto b = unit_oracle(vec(f), 8, 8, s1.conv3x3);
  a.insert(a.end(), b.begin(), b.end());
  const auto main1 = unit_oracle(unit_oracle(a, 8, 8, s1.conv1x3), 8, 8, s1.conv3x1);
  const auto x = oracle::max_pool2d(plus(main1, unit_oracle(vec(f), 8, 8, s1.residual3x3)), 1, 6, 8, 8, 2, 2, 0);
  CHECK(testing::max_abs_diff(out.x.values(), x) <= 1e-12);

  auto additive = [](const std::vector<double>& in, const fgpcb::Stage& s) {
    const auto sum = plus(unit_oracle(in, 4, 4, s.conv1x1), unit_oracle(in, 4, 4, s.conv3x3));
    return plus(unit_oracle(unit_oracle(sum, 4, 4, s.conv1x3), 4, 4, s.conv3x1), in);
  };
  const auto y = additive(x, params.stage2);
  CHECK(testing::max_abs_diff(out.y.values(), y) <= 1e-12);
  CHECK(testing::max_abs_diff(out.z.values(), additive(y, params.stage3)) <= 1e-12);
}

TEST_CASE("receptive field arithmetic") {
  using P = std::pair<std::size_t, std::size_t>;
  CHECK(fgpcb::receptive_field({ConvSpec::same(1, 1, 1, 3), ConvSpec::same(1, 1, 3, 1)}) == P{3, 3});
  CHECK(fgpcb::receptive_field({ConvSpec::same(1, 1, 3, 3, 2), ConvSpec::same(1, 1, 3, 3)}) == P{7, 7});
  CHECK(fgpcb::receptive_field({ConvSpec::same(1, 1, 3, 3, 1, 2)}) == P{5, 5});
}

TEST_CASE("wrong channel count is rejected") {
  ParamStore store;
  Initializer init(5);
  auto params = fgpcb::FgpcbParams::create(store, "fgpcb.", small_config(), init);
  CHECK_THROWS_AS(fgpcb::forward(Tensor::zeros({1, 7, 8, 8}), params, false), std::invalid_argument);
}

}  // TEST_SUITE

TEST_SUITE("fusion") {

TEST_CASE("bilinear pair of orthonormal rows is the identity") {
  Tensor e({1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  fusion::FlattenedFeature a{e};
  CHECK(testing::bit_equal(fusion::bilinear_pair(a, a), e));
  fusion::FlattenedFeature z{Tensor::zeros({1, 3, 3})};
  const Tensor zero = fusion::bilinear_pair(z, a);
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("bilinear pair matches the triple loop") {
  std::mt19937_64 rng(6);
  Tensor a = random_tensor({2, 3, 7}, rng), b = random_tensor({2, 3, 7}, rng);
  const auto got = fusion::bilinear_pair({a}, {b});
  CHECK(testing::max_abs_diff(got.values(), oracle::bilinear_pair(vec(a), vec(b), 2, 3, 7)) <= 1e-12);
}

TEST_CASE("normalisation examples") {
  auto n = fusion::normalize_bilinear(Tensor({1, 2, 2}, {4, 0, 0, 0}));
  CHECK(vec(n.values) == std::vector<double>{1, 0, 0, 0});
  auto eye = fusion::normalize_bilinear(Tensor({1, 2, 2}, {1, 0, 0, 1}));
  const double r = 1 / std::sqrt(2.0);
  CHECK(std::abs(eye.values.values()[0] - r) <= 1e-15);
  CHECK(eye.values.values()[1] == 0.0);
  CHECK(std::abs(eye.values.values()[3] - r) <= 1e-15);
  auto zero = fusion::normalize_bilinear(Tensor::zeros({2, 2, 2}));
  for (double v : zero.values.values()) CHECK(v == 0.0);
  CHECK(zero.zero_rows == std::vector<std::size_t>{0, 1});
}

TEST_CASE("degenerate inputs give a uniform descriptor and softmax of the bias") {
  ParamStore store;
  Initializer init(7);
  auto params = fusion::FusionParams::create(store, "fusion.", 3, 2, init);
  Tensor bias = params.fc.bias;
  bias.values_mut()[0] = 0.3;
  bias.values_mut()[1] = -0.2;
  fusion::FlattenedFeature z{Tensor::zeros({1, 3, 5})};
  auto out = fusion::fuse_classify(z, z, z, params);
  for (double v : out.o_bp.values()) CHECK(std::abs(v - 1.0 / 9.0) <= 1e-15);
  const double p0 = 1 / (1 + std::exp(-0.5));
  CHECK(std::abs(out.o_fused.values()[0] - p0) <= 1e-15);
  CHECK_FALSE(out.zero_rows.empty());
}

TEST_CASE("descriptor is invariant to a shared spatial permutation") {
  ParamStore store;
  Initializer init(8);
  auto params = fusion::FusionParams::create(store, "fusion.", 3, 2, init);
  std::mt19937_64 rng(8);
  Tensor x = random_tensor({2, 3, 6}, rng), y = random_tensor({2, 3, 6}, rng), z = random_tensor({2, 3, 6}, rng);
  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](const Tensor& t) { return index_select(t, 2, perm); };
  auto a = fusion::fuse_classify({x}, {y}, {z}, params);
  auto b = fusion::fuse_classify({permute(x)}, {permute(y)}, {permute(z)}, params);
  CHECK(testing::max_abs_diff(a.o_bp.values(), b.o_bp.values()) <= 1e-10);
}

TEST_CASE("fused heads match the from-scratch oracle") {
  ParamStore store;
  Initializer init(9);
  auto params = fusion::FusionParams::create(store, "fusion.", 4, 3, init);
  std::mt19937_64 rng(9);
  Tensor x = random_tensor({2, 4, 5}, rng), y = random_tensor({2, 4, 5}, rng), z = random_tensor({2, 4, 5}, rng);
  auto got = fusion::fuse_classify({x}, {y}, {z}, params);
  auto ref = oracle::fusion(vec(x), vec(y), vec(z), 2, 4, 5, vec(params.fc.weight), vec(params.fc.bias), 3);
  CHECK(testing::max_abs_diff(got.o_bp.values(), ref.o_bp) <= 1e-10);
  CHECK(testing::max_abs_diff(got.o_fused.values(), ref.o_fused) <= 1e-10);
}

TEST_CASE("misaligned spatial extents are rejected") {
  ParamStore store;
  Initializer init(10);
  auto params = fusion::FusionParams::create(store, "fusion.", 3, 2, init);
  CHECK_THROWS_AS(fusion::fuse_classify({Tensor::zeros({1, 3, 4})}, {Tensor::zeros({1, 3, 5})},
                                        {Tensor::zeros({1, 3, 4})}, params),
                  std::invalid_argument);
}

}  // TEST_SUITE
