#pragma once

// Hand-counted and property checks of the tracking metrics, shared by the
// unit tests and the acceptance run.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fgsgt/metrics.hpp"

namespace fgsgt::testing {

using metrics::Trajectory;

struct CheckOutcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

/// Five frames against a fixed 20x20 ground truth at (50, 50):
///   0: exact             distance 0,  IoU 1
///   1: shifted (10, 0)   distance 10, IoU 200/600
///   2: shifted (0, 30)   distance 30, IoU 0
///   3: shifted (12, 16)  distance 20, IoU 32/768
///   4: same centre, 10x10 distance 0,  IoU 100/400
inline Trajectory toy_trajectory() {
  Trajectory t;
  const BBox g{50, 50, 20, 20};
  t.predicted = {g, {60, 50, 20, 20}, {50, 80, 20, 20}, {62, 66, 20, 20}, {50, 50, 10, 10}};
  t.ground_truth.assign(5, g);
  return t;
}

inline CheckOutcome toy_hand_counts() {
  CheckOutcome out;
  const Trajectory t = toy_trajectory();
  const std::vector<double> thr{0, 5, 10, 19.5, 20, 25, 30, 31};
  const std::vector<double> hits{2, 2, 3, 3, 4, 4, 5, 5};
  const auto pc = metrics::precision_curve(t, thr);
  for (std::size_t i = 0; i < thr.size(); ++i)
    if (pc[i] != hits[i] / 5) out.fail("precision at " + std::to_string(thr[i]));
  if (metrics::precision_at(t) != 0.8) out.fail("precision@20");

  // IoU > tau counts over tau = 0, 0.05, ..., 1: IoU 0.25 fails tau = 0.25 (strict).
  std::vector<double> succ{4, 3, 3, 3, 3, 2, 2};
  succ.resize(20, 1);
  succ.push_back(0);
  const auto sc = metrics::success_curve(t);
  for (std::size_t i = 0; i < 21; ++i)
    if (sc[i] != succ[i] / 5) out.fail("success at tau index " + std::to_string(i));
  // The AUC is a mean of fractions, so it is exact only up to summation order.
  constexpr double kSumTol = 1e-15;
  if (std::abs(metrics::success_auc(t) - 33.0 / 105.0) > kSumTol) out.fail("success AUC != 33/105");

  // Normalised errors 0, 0.5, 1.5, 1.0, 0.
  if (metrics::norm_precision(t) != 0.4) out.fail("normalised precision != 2/5");

  Trajectory same;
  same.predicted = same.ground_truth = t.ground_truth;
  if (std::abs(metrics::success_auc(same) - 20.0 / 21.0) > kSumTol) out.fail("identical boxes AUC != 20/21");
  for (double v : metrics::precision_curve(same, metrics::default_precision_thresholds()))
    if (v != 1.0) out.fail("identical boxes precision != 1");
  if (metrics::norm_precision(same) != 1.0) out.fail("identical boxes normalised precision != 1");

  Trajectory far = same;
  for (BBox& b : far.predicted) b.cx += 100;
  if (metrics::success_auc(far) != 0.0) out.fail("disjoint boxes AUC != 0");

  Trajectory off = same;
  for (BBox& b : off.predicted) b.cx += 25;  // 25 px off, 1.25 widths
  if (metrics::precision_at(off, 20) != 0.0 || metrics::precision_at(off, 25) != 1.0) out.fail("25 px offset");
  Trajectory np = same;
  for (BBox& b : np.predicted) b.cx += 0.3 * b.w;
  if (metrics::norm_precision(np) != 0.0) out.fail("0.3 w offset");

  // x-range [0, 2] inside [-2, 2], equal heights: IoU 8/16.
  Trajectory half;
  half.ground_truth = {{0, 0, 4, 4}};
  half.predicted = {{1, 0, 2, 4}};
  const auto hc = metrics::success_curve(half);
  for (std::size_t i = 0; i < 21; ++i) {
    const double want = i < 10 ? 1.0 : 0.0;
    if (hc[i] != want) out.fail("IoU 0.5 case at tau index " + std::to_string(i));
  }
  return out;
}

/// Monotonicity of both curves and invariance of every metric under joint
/// translation (and of normalised precision under doubling) on random
/// trajectories. Coordinates are multiples of 1/2 so the transforms are exact.
inline CheckOutcome random_properties(std::size_t count, std::uint64_t seed) {
  CheckOutcome out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(0, 400), ext(4, 120), jitter(-60, 60), len(1, 20), shift(-100, 100);
  const auto thr = metrics::default_precision_thresholds();
  for (std::size_t n = 0; n < count && out.pass; ++n) {
    Trajectory t;
    const int frames = len(rng);
    for (int f = 0; f < frames; ++f) {
      const BBox g{pos(rng) / 2.0, pos(rng) / 2.0, ext(rng) / 2.0, ext(rng) / 2.0};
      t.ground_truth.push_back(g);
      t.predicted.push_back({g.cx + jitter(rng) / 2.0, g.cy + jitter(rng) / 2.0, ext(rng) / 2.0, ext(rng) / 2.0});
    }
    const auto pc = metrics::precision_curve(t, thr);
    const auto sc = metrics::success_curve(t);
    for (std::size_t i = 1; i < pc.size(); ++i)
      if (pc[i] < pc[i - 1]) out.fail("precision curve decreases");
    for (std::size_t i = 1; i < sc.size(); ++i)
      if (sc[i] > sc[i - 1]) out.fail("success curve increases");

    Trajectory moved = t, doubled = t;
    const double tx = shift(rng), ty = shift(rng);
    for (auto* v : {&moved.predicted, &moved.ground_truth})
      for (BBox& b : *v) b.cx += tx, b.cy += ty;
    for (auto* v : {&doubled.predicted, &doubled.ground_truth})
      for (BBox& b : *v) b = {2 * b.cx, 2 * b.cy, 2 * b.w, 2 * b.h};
    if (metrics::precision_curve(moved, thr) != pc) out.fail("precision not translation invariant");
    if (metrics::success_curve(moved) != sc) out.fail("success not translation invariant");
    if (metrics::norm_precision(moved) != metrics::norm_precision(t)) out.fail("normalised precision not translation invariant");
    if (metrics::norm_precision(doubled) != metrics::norm_precision(t)) out.fail("normalised precision not scale invariant");
    if (!out.pass) {
      std::ostringstream os;
      os << " (trajectory " << n << ")";
      out.detail += os.str();
    }
  }
  return out;
}

}  // namespace fgsgt::testing
