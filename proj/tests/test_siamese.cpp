#include <doctest.h>

#include <algorithm>
#include <random>

#include "fgsgt/model.hpp"
#include "fgsgt/verify/oracles.hpp"
#include "helpers.hpp"

using namespace fgsgt;
using namespace fgsgt::siamese;
using testing::random_tensor;
using testing::vec;

namespace {

// Input interval [lo, hi] read by output positions [lo_out, hi_out] of a conv.
std::pair<long, long> back_project(std::pair<long, long> out, const ConvSpec& s, bool rows) {
  const long k = static_cast<long>(rows ? s.kernel_h : s.kernel_w);
  const long pad = static_cast<long>(rows ? s.pad_h : s.pad_w);
  const long st = static_cast<long>(s.stride), d = static_cast<long>(s.dilation);
  return {out.first * st - pad, out.second * st - pad + (k - 1) * d};
}

HeadOutputs random_heads(std::mt19937_64& rng, std::size_t A, std::size_t n, double reg_scale = 0.3) {
  return {random_tensor({1, 2 * A, n, n}, rng, -2, 2), random_tensor({1, 4 * A, n, n}, rng, -reg_scale, reg_scale)};
}

}  // namespace

TEST_SUITE("siamese") {

TEST_CASE("64-pixel search gives 8x8 reduced features") {
  ParamStore store;
  Initializer init(1);
  auto p = BackboneParams::create(store, BackboneConfig{}, init);
  CHECK(p.cfg.total_stride() == 8);
  std::mt19937_64 rng(1);
  auto out = backbone_forward(random_tensor({1, 1, 64, 64}, rng, 0, 1), p, false);
  for (const Tensor* f : {&out.f3, &out.f4, &out.f5}) CHECK(f->shape() == Shape{1, 16, 8, 8});
  CHECK(out.raw[0].shape() == Shape{1, 8, 32, 32});
}

TEST_CASE("zero image gives zero features in inference mode") {
  ParamStore store;
  Initializer init(2);
  auto p = BackboneParams::create(store, BackboneConfig{}, init);
  auto out = backbone_forward(Tensor::zeros({1, 1, 32, 32}), p, false);
  for (const Tensor* f : {&out.f3, &out.f4, &out.f5})
    for (double v : f->values()) CHECK(v == 0.0);
}

TEST_CASE("a single-pixel probe only reaches cells whose receptive field covers it") {
  ParamStore store;
  Initializer init(3);
  auto p = BackboneParams::create(store, BackboneConfig{}, init);
  std::mt19937_64 rng(3);
  Tensor img = random_tensor({1, 1, 64, 64}, rng, 0, 1);
  const auto base = backbone_forward(img, p, false).raw[2];
  const long px = 13, py = 40;
  Tensor probe = img.detach();
  probe.values_mut()[py * 64 + px] += 0.5;
  const auto moved = backbone_forward(probe, p, false).raw[2];
  const std::size_t C = base.dim(1), H = base.dim(2), W = base.dim(3);
  std::size_t covered = 0;
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      std::pair<long, long> ri{long(r), long(r)}, ci{long(c), long(c)};
      for (int s = 2; s >= 0; --s) {
        ri = back_project(ri, p.stages[s].conv.spec, true);
        ci = back_project(ci, p.stages[s].conv.spec, false);
      }
      const bool reach = ri.first <= py && py <= ri.second && ci.first <= px && px <= ci.second;
      covered += reach;
      bool changed = false;
      for (std::size_t ch = 0; ch < C; ++ch) {
        const std::size_t i = (ch * H + r) * W + c;
        changed |= base.values()[i] != moved.values()[i];
      }
      CHECK(changed == reach);
    }
  CHECK(covered > 0);
  CHECK(covered < H * W);
}

TEST_CASE("correlation examples") {
  std::mt19937_64 rng(4);
  Tensor s = random_tensor({1, 2, 5, 5}, rng);
  Tensor two = Tensor::full({1, 2, 1, 1}, 2.0);
  Tensor r = dw_corr(s, two);
  CHECK(r.shape() == s.shape());
  for (std::size_t i = 0; i < s.numel(); ++i) CHECK(r.values()[i] == 2.0 * s.values()[i]);
  const Tensor zero = dw_corr(s, Tensor::zeros({1, 2, 3, 3}));
  for (double v : zero.values()) CHECK(v == 0.0);

  // Template cut from the search map: the response peak sits at the cut.
  Tensor big = random_tensor({1, 1, 9, 9}, rng, 0, 1);
  Tensor t = slice(slice(big, 2, 4, 3), 3, 1, 3);
  Tensor resp = dw_corr(big, t);
  const auto ref = oracle::dw_corr(vec(big), vec(t), 1, 1, 9, 9, 3, 3);
  CHECK(testing::max_abs_diff(resp.values(), ref) <= 1e-12);
  const auto at = std::max_element(ref.begin(), ref.end()) - ref.begin();
  CHECK(std::max_element(resp.values().begin(), resp.values().end()) - resp.values().begin() == at);
}

TEST_CASE("rpn head widths and zero response") {
  ParamStore store;
  Initializer init(5);
  auto h = HeadParams::create(store, "head", 4, 5, init, {});
  auto out = rpn_head(Tensor::zeros({1, 4, 5, 5}), h);
  CHECK(out.cls.shape() == Shape{1, 10, 5, 5});
  CHECK(out.reg.shape() == Shape{1, 20, 5, 5});
  for (double v : out.cls.values()) CHECK(v == 0.0);
  for (double v : out.reg.values()) CHECK(v == 0.0);
}

TEST_CASE("weighted fusion of branches") {
  std::mt19937_64 rng(6);
  std::array<HeadOutputs, 3> b{random_heads(rng, 2, 3), random_heads(rng, 2, 3), random_heads(rng, 2, 3)};
  auto one = weighted_fuse(b, Tensor({3}, {0, 1, 0}), Tensor({3}, {0, 0, 1}));
  CHECK(testing::bit_equal(one.cls, b[1].cls));
  CHECK(testing::bit_equal(one.reg, b[2].reg));

  std::array<HeadOutputs, 3> same{b[0], b[0], b[0]};
  const double third = 1.0 / 3.0;
  auto eq = weighted_fuse(same, Tensor({3}, {third, third, third}), Tensor({3}, {third, third, third}));
  CHECK(testing::max_abs_diff(eq.cls.values(), b[0].cls.values()) <= 1e-15);

  const std::array<double, 3> w{0.2, 0.5, 0.3};
  auto mixed = weighted_fuse(b, Tensor({3}, {w[0], w[1], w[2]}), Tensor({3}, {w[0], w[1], w[2]}));
  const auto ref = oracle::weighted_fuse({vec(b[0].cls), vec(b[1].cls), vec(b[2].cls)}, w);
  CHECK(testing::max_abs_diff(mixed.cls.values(), ref) <= 1e-12);
}

TEST_CASE("anchor grid is centred with one cell per stride") {
  auto g = AnchorGrid::generate(AnchorConfig{}, 5, 5, 64);
  CHECK(g.size() == 125);
  const BBox& mid = g.anchors[12];
  CHECK(mid.cx == 32.0);
  CHECK(mid.cy == 32.0);
  CHECK(g.anchors[13].cx - mid.cx == 8.0);
  for (const BBox& a : g.anchors) CHECK(a.w * a.h == doctest::Approx(256.0));
}

TEST_CASE("selection without window or penalty returns the best raw anchor") {
  std::mt19937_64 rng(7);
  auto g = AnchorGrid::generate(AnchorConfig{}, 5, 5, 64);
  HeadOutputs h = random_heads(rng, 5, 5);
  testing::fill(h.reg, 0.0);
  SelectConfig cfg{0.0, 0.0, 0.3, 1.0};
  auto sel = decode_and_select(h, g, {32, 32, 16, 16}, cfg);
  const auto s = vec(anchor_scores(h.cls, 5));
  CHECK(sel.index == static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin()));
  CHECK(sel.box == g.anchors[sel.index]);
}

TEST_CASE("equal scores with the window on pick the centre cell") {
  auto g = AnchorGrid::generate(AnchorConfig{}, 5, 5, 64);
  HeadOutputs h{Tensor::zeros({1, 10, 5, 5}), Tensor::zeros({1, 20, 5, 5})};
  SelectConfig cfg{0.0, 0.4, 0.3, 1.0};
  auto sel = decode_and_select(h, g, {32, 32, 16, 16}, cfg);
  CHECK(sel.box.cx == 32.0);
  CHECK(sel.box.cy == 32.0);
}

TEST_CASE("selection matches the exhaustive oracle") {
  std::mt19937_64 rng(8);
  auto g = AnchorGrid::generate(AnchorConfig{}, 5, 5, 64);
  const SelectConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    HeadOutputs h = random_heads(rng, 5, 5);
    const BBox prev{32, 32, 10.0 + trial % 7, 14.0 - trial % 5};
    auto sel = decode_and_select(h, g, prev, cfg);
    auto ref = oracle::select(vec(h.cls), vec(h.reg), g.anchors, 5, 5, 5, prev, cfg, 64);
    CHECK(sel.index == ref.index);
    CHECK(std::abs(sel.pscore - ref.pscore) <= 1e-12);
    CHECK(std::abs(sel.box.cx - ref.box.cx) <= 1e-12);
  }
}

TEST_CASE("box codec round-trips") {
  const BBox a{10, 20, 8, 16}, b{13, 18, 12, 9};
  const BBox back = decode_deltas(encode_deltas(b, a), a);
  CHECK(back.cx == doctest::Approx(b.cx).epsilon(1e-14));
  CHECK(back.w == doctest::Approx(b.w).epsilon(1e-14));
  CHECK(iou(a, a) == 1.0);
  CHECK(iou({0, 0, 2, 2}, {10, 0, 2, 2}) == 0.0);
}

}  // TEST_SUITE
