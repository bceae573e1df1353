#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "fgsgt/verify/gradcheck.hpp"

namespace fgsgt::verify {

struct CaseResult {
  std::string name;
  bool pass = true;
  double metric = 0;  // worst error observed
  std::string detail;
};

struct SuiteReport {
  std::vector<CaseResult> cases;
  double seconds = 0;
  bool pass() const;
  double worst() const;
};

/// Finite-difference checks of every differentiable op, composed module and
/// loss, each repeated over `seeds` random draws.
SuiteReport gradcheck_suite(std::size_t seeds, const GradCheckOptions& opts = {});

/// Library kernels against the loop oracles on `instances` random cases each.
/// Tolerance 1e-12 absolute, 1e-10 for the normalised fusion head.
SuiteReport oracle_suite(std::size_t instances);

void print_report(std::ostream& out, const std::string& title, const SuiteReport& report);

}  // namespace fgsgt::verify
