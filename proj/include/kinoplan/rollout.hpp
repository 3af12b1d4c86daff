#pragma once

#include <string>

#include "kinoplan/artifacts.hpp"
#include "kinoplan/dynamics.hpp"

namespace kinoplan {

struct RolloutReport {
  double endpoint_error = 0.0;   // |x_rollout(tau) - x_plan(tau)|
  double max_deviation = 0.0;    // max over rows
  double recomputed_cost = 0.0;  // quadrature of the recorded controls
  std::vector<double> times;
  std::vector<Vec> plan_states;
  std::vector<Vec> rollout_states;
};

/// Integrates the full nonlinear dynamics from x_init under the recorded
/// control trajectory (zero-order hold between samples) and compares
/// against the planned states.
RolloutReport rollout_trajectory(const SystemModel& model, const CostWeights& R,
                                 const Vec& x_init, const TrajectoryData& traj);

void write_rollout_csv(const std::string& path, const RolloutReport& report,
                       const ArtifactMeta& meta);

}  // namespace kinoplan
