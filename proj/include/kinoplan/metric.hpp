#pragma once

#include <optional>
#include <span>
#include <vector>

#include "kinoplan/affine_ocp.hpp"
#include "kinoplan/dynamics.hpp"

namespace kinoplan {

/// Per-candidate sweep outcome: best cost d_i and its minimizing horizon,
/// plus how far the shared Gramian integration ran.
struct MetricQueryReport {
  std::vector<double> best_cost;
  std::vector<double> best_tau;
  double horizon = 0.0;
  long long gramian_steps = 0;
};

/// AQR pseudo-metric from x_from to x_to: optimal cost of the affine
/// problem linearized at lin_point (default: x_to, the final-state
/// convention used by Nearest/NearBackward) with u_hat = 0. Asymmetric in
/// general.
DistanceResult aqr_distance(const SystemModel& model, const Vec& x_from,
                            const Vec& x_to, const CostWeights& R,
                            const AffineOcpConfig& cfg,
                            const Vec* lin_point = nullptr);

/// Argmin of dist(v_i, x_rand) over candidates via one backward sweep
/// linearized at x_rand. Early exit fires once the elapsed horizon exceeds
/// the incumbent minimum (no cheaper cost can appear since C(tau) >= tau);
/// `early_exit = false` scans the full tau_max horizon (test hook). Ties
/// break toward the lowest index.
int nearest(std::span<const Vec> candidates, const Vec& x_rand,
            const SystemModel& model, const CostWeights& R,
            const AffineOcpConfig& cfg, MetricQueryReport* report = nullptr,
            bool early_exit = true);

/// {i : dist(v_i, x_new) <= radius} — candidate parents; one backward sweep
/// linearized at x_new, horizon = radius.
std::vector<int> near_backward(std::span<const Vec> candidates, const Vec& x_new,
                               double radius, const SystemModel& model,
                               const CostWeights& R, const AffineOcpConfig& cfg,
                               MetricQueryReport* report = nullptr,
                               bool early_exit = true);

/// {i : dist(x_new, v_i) <= radius} — rewire candidates; one forward sweep
/// linearized at x_new.
std::vector<int> near_forward(std::span<const Vec> candidates, const Vec& x_new,
                              double radius, const SystemModel& model,
                              const CostWeights& R, const AffineOcpConfig& cfg,
                              MetricQueryReport* report = nullptr,
                              bool early_exit = true);

struct SteerResult {
  Vec x_new;
  TrajectorySegment segment;
  bool reached_target = false;  // cost to x_rand was within eta
};

/// Steers from x_nearest toward x_rand on the model linearized at
/// x_nearest: returns x_rand with the full optimal segment when its cost is
/// within eta, otherwise the trajectory point where the running cost first
/// reaches eta. Empty when the target is unreachable within tau_max.
std::optional<SteerResult> steer(const SystemModel& model, const Vec& x_nearest,
                                 const Vec& x_rand, double eta,
                                 const CostWeights& R, const AffineOcpConfig& cfg);

}  // namespace kinoplan
