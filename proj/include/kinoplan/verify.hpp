#pragma once

#include <string>
#include <vector>

#include "kinoplan/affine_ocp.hpp"

namespace kinoplan::verify {

/// Direct-transcription route to the optimal affine connection cost:
/// piecewise-constant control on `control_intervals` pieces, exact interval
/// discretization from its own matrix integration, minimum-energy solve per
/// final time over a dense tau grid. Deliberately shares nothing with the
/// Gramian code path it cross-checks.
double transcription_optimal_cost(const AffineModel& model, const Vec& x0,
                                  const Vec& x1, double tau_lo, double tau_hi,
                                  int tau_samples, int control_intervals);

/// Cost for one pinned final time (same transcription route).
double transcription_cost_at(const AffineModel& model, const Vec& x0,
                             const Vec& x1, double tau, int control_intervals);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<CheckResult> suite_gradients();
std::vector<CheckResult> suite_oracle();
std::vector<CheckResult> suite_hamiltonian(int instances = 6);
std::vector<CheckResult> suite_metric(int trees = 5, bool check_early_exit = true);

/// Runs a named suite, printing one pass/fail line per property; returns 0
/// iff every property passed. Unknown names return 1.
int run_suite(const std::string& name);

}  // namespace kinoplan::verify
