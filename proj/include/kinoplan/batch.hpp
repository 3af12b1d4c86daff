#pragma once

#include <string>
#include <vector>

#include "kinoplan/scenario.hpp"

namespace kinoplan {

struct TrialRecord {
  std::uint64_t seed = 0;
  std::vector<double> checkpoint_cost;  // incumbent best at each checkpoint
  double final_cost = std::numeric_limits<double>::infinity();
  std::size_t final_nodes = 0;
};

struct CheckpointSummary {
  int nodes = 0;
  int feasible = 0;
  double mean = std::numeric_limits<double>::infinity();
  double variance = std::numeric_limits<double>::quiet_NaN();
};

struct BatchReport {
  std::vector<int> checkpoints;
  std::vector<TrialRecord> trials;
  std::vector<CheckpointSummary> summary;
};

/// K independently seeded plans (seed = base_seed + trial index), recording
/// the incumbent best goal cost whenever the tree first reaches each
/// checkpoint size. Trials run concurrently up to `threads`; results are
/// joined in trial order, so the report is schedule-independent. Mean and
/// variance are over feasible trials only (variance NaN below two).
BatchReport run_batch(const Scenario& scenario, int trials,
                      const std::vector<int>& checkpoints, int threads);

void write_batch_csv(const std::string& path, const BatchReport& report,
                     const std::string& scenario_digest, std::uint64_t base_seed,
                     const std::string& solver);

/// KINOPLAN_THREADS override, defaulting to the hardware concurrency.
int batch_thread_count();

}  // namespace kinoplan
