#include "fgsgt/verify/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace fgsgt::verify {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradCheckResult gradcheck(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs,
                          const GradCheckOptions& opts, std::mt19937_64& rng) {
  for (Tensor t : inputs) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  NoGradGuard guard;
  auto eval = [&] { return f().item(); };
  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor t = inputs[k];
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > opts.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opts.max_entries);
    }
    for (std::size_t i : idx) {
      auto v = t.values_mut();
      const double x0 = v[i];
      v[i] = x0 + opts.step;
      const double fp = eval();
      v[i] = x0 - opts.step;
      const double fm = eval();
      v[i] = x0;
      const double numeric = (fp - fm) / (2 * opts.step);
      const double a = analytic[k][i];
      double err = relative_error(a, numeric, opts.floor);
      ++res.checked;
      if (err >= opts.tolerance) {
        const double f0 = eval();
        const double right = (fp - f0) / opts.step, left = (f0 - fm) / opts.step;
        // A kink inside (x - h, x + h) splits the one-sided slopes by twice the
        // central-difference bias; at a smooth point they differ only by h * f''.
        if (std::fabs(right - left) >= std::fabs(a - numeric)) {
          ++res.kinks;
          continue;
        }
      }
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        std::ostringstream os;
        os.precision(10);
        os << "input " << k << " entry " << i << ": analytic " << a << " numeric " << numeric;
        res.worst = os.str();
      }
    }
  }
  res.pass = res.max_rel_error < opts.tolerance &&
             static_cast<double>(res.kinks) <= opts.max_kink_fraction * static_cast<double>(res.checked);
  return res;
}

}  // namespace fgsgt::verify
