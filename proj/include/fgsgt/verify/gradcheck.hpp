#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fgsgt/tensor.hpp"

namespace fgsgt::verify {

struct GradCheckOptions {
  double step = 1e-5;        // central-difference half width
  double tolerance = 1e-4;   // max relative error
  double floor = 1e-5;       // denominator floor for near-zero gradients
  std::size_t max_entries = 24;  // per input tensor; larger tensors are subsampled
  double max_kink_fraction = 0.1;
};

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t kinks = 0;  // entries skipped because the one-sided slopes disagree
  bool pass = true;
  std::string worst;      // description of the worst entry
};

/// relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares the reverse-mode gradient of the scalar f() with respect to each
/// input against central differences. An entry whose one-sided slopes differ
/// by at least the analytic/central gap sits on a kink and is skipped;
/// the case fails if more than max_kink_fraction of entries are skipped.
GradCheckResult gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                          const GradCheckOptions& opts, std::mt19937_64& rng);

}  // namespace fgsgt::verify
