#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tristream/tensor.hpp"

namespace tristream {

struct GradCheckResult {
  bool passed = true;
  double max_rel_err = 0.0;
  std::string detail;  // empty when passed
};

// Compares the analytic gradient of scalar_fn w.r.t. every element of every
// input against central finite differences (step h, quotient in f64).
// Error metric per element: |analytic - numeric| / max(1, |analytic|, |numeric|).
// scalar_fn must be a pure function of the inputs' current data.
GradCheckResult gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& scalar_fn,
    std::vector<Tensor> inputs, double tolerance = 1e-3, double h = 1e-3);

// Per-op-kind summary used by the gradcheck command and the acceptance suite.
struct OpCheckReport {
  std::string op;
  int cases = 0;
  int failures = 0;
  double max_rel_err = 0.0;
  std::string first_failure;
};

// Runs `cases` randomized gradcheck instances for every registered op kind
// (all tensor ops plus both heads). Deterministic for a given seed.
std::vector<OpCheckReport> run_gradcheck_suite(uint64_t seed, int cases_per_op);

}  // namespace tristream
