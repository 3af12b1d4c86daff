#include "kinoplan/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinoplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Shared candidate-scoring sweep. Integrates one Gramian system from
/// `origin` and scores every candidate at each grid step; the per-step G
/// factorization is shared across candidates. `stop_horizon` of +inf means
/// "run until the incumbent-minimum rule fires".
MetricQueryReport sweep_candidates(std::span<const Vec> candidates,
                                   const AffineModel& affine, const Vec& origin,
                                   PropagationDirection direction,
                                   double stop_horizon, bool incumbent_stop,
                                   const AffineOcpConfig& cfg) {
  MetricQueryReport report;
  const std::size_t count = candidates.size();
  report.best_cost.assign(count, kInf);
  report.best_tau.assign(count, 0.0);

  detail::GramianSweep sweep(affine, origin, direction, cfg.dt);
  const double horizon_cap = std::min(stop_horizon, cfg.tau_max);

  // Full grid steps only, mirroring the tau grid of the pairwise distance
  // scan (the sweep/pairwise equivalence tests rely on identical grids).
  Vec diff, work;
  while (sweep.horizon() + cfg.dt <= horizon_cap + 1e-12) {
    const double tau = sweep.advance();
    const GramianFactor factor(sweep.gramian());
    const Vec xh = sweep.x_h();
    double incumbent = kInf;
    for (std::size_t i = 0; i < count; ++i) {
      diff = candidates[i] - xh;
      const double c = tau + factor.half_quad_ws(diff, work);
      if (c < report.best_cost[i]) {
        report.best_cost[i] = c;
        report.best_tau[i] = tau;
      }
      incumbent = std::min(incumbent, report.best_cost[i]);
    }
    if (incumbent_stop && tau >= incumbent) break;
  }
  report.horizon = sweep.horizon();
  report.gramian_steps = sweep.steps();
  return report;
}

}  // namespace

DistanceResult aqr_distance(const SystemModel& model, const Vec& x_from,
                            const Vec& x_to, const CostWeights& R,
                            const AffineOcpConfig& cfg, const Vec* lin_point) {
  const Vec& at = lin_point ? *lin_point : x_to;
  const Vec u0 = Vec::Zero(model.control_dim());
  const AffineModel affine = linearize(model, at, u0, R);
  return optimal_final_time(affine, x_from, x_to, cfg);
}

int nearest(std::span<const Vec> candidates, const Vec& x_rand,
            const SystemModel& model, const CostWeights& R,
            const AffineOcpConfig& cfg, MetricQueryReport* report_out,
            bool early_exit) {
  if (candidates.empty()) throw std::invalid_argument("nearest: empty tree");
  const Vec u0 = Vec::Zero(model.control_dim());
  const AffineModel affine = linearize(model, x_rand, u0, R);
  MetricQueryReport report =
      sweep_candidates(candidates, affine, x_rand, PropagationDirection::Backward,
                       kInf, early_exit, cfg);
  int best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (report.best_cost[i] < report.best_cost[best]) best = static_cast<int>(i);
  if (report_out) *report_out = std::move(report);
  return best;
}

std::vector<int> near_backward(std::span<const Vec> candidates, const Vec& x_new,
                               double radius, const SystemModel& model,
                               const CostWeights& R, const AffineOcpConfig& cfg,
                               MetricQueryReport* report_out, bool early_exit) {
  if (!(radius > 0.0)) throw std::invalid_argument("near_backward: radius <= 0");
  const Vec u0 = Vec::Zero(model.control_dim());
  const AffineModel affine = linearize(model, x_new, u0, R);
  MetricQueryReport report =
      sweep_candidates(candidates, affine, x_new, PropagationDirection::Backward,
                       early_exit ? radius : kInf, false, cfg);
  std::vector<int> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (report.best_cost[i] <= radius) out.push_back(static_cast<int>(i));
  if (report_out) *report_out = std::move(report);
  return out;
}

std::vector<int> near_forward(std::span<const Vec> candidates, const Vec& x_new,
                              double radius, const SystemModel& model,
                              const CostWeights& R, const AffineOcpConfig& cfg,
                              MetricQueryReport* report_out, bool early_exit) {
  if (!(radius > 0.0)) throw std::invalid_argument("near_forward: radius <= 0");
  const Vec u0 = Vec::Zero(model.control_dim());
  const AffineModel affine = linearize(model, x_new, u0, R);
  MetricQueryReport report =
      sweep_candidates(candidates, affine, x_new, PropagationDirection::Forward,
                       early_exit ? radius : kInf, false, cfg);
  std::vector<int> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (report.best_cost[i] <= radius) out.push_back(static_cast<int>(i));
  if (report_out) *report_out = std::move(report);
  return out;
}

std::optional<SteerResult> steer(const SystemModel& model, const Vec& x_nearest,
                                 const Vec& x_rand, double eta,
                                 const CostWeights& R, const AffineOcpConfig& cfg) {
  if (!(eta > 0.0)) throw std::invalid_argument("steer: eta must be > 0");
  const Vec u0 = Vec::Zero(model.control_dim());
  const AffineModel affine = linearize(model, x_nearest, u0, R);
  const DistanceResult dist = optimal_final_time(affine, x_nearest, x_rand, cfg);
  if (!dist.valid || !std::isfinite(dist.cost)) return std::nullopt;

  TrajectorySegment seg;
  try {
    seg = solve_affine(affine, x_nearest, x_rand, cfg, dist.tau_star);
  } catch (const UnreachableStateError&) {
    return std::nullopt;
  }
  seg.cost = dist.cost;

  if (dist.cost <= eta)
    return SteerResult{x_rand, std::move(seg), true};

  // Walk the trajectory accumulating the running cost until it reaches eta.
  double running = 0.0;
  std::size_t cut = seg.size() - 1;
  for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
    const double l0 = 1.0 + R.control_cost(seg.controls[i]);
    const double l1 = 1.0 + R.control_cost(seg.controls[i + 1]);
    const double dt_i = seg.times[i + 1] - seg.times[i];
    running += 0.5 * dt_i * (l0 + l1);
    if (running >= eta) {
      cut = i + 1;
      break;
    }
  }
  if (cut == 0 || cut >= seg.size() - 1) {
    // eta was never reached before the end (quadrature slack); treat as the
    // full segment.
    return SteerResult{x_rand, std::move(seg), true};
  }

  TrajectorySegment trunc;
  trunc.times.assign(seg.times.begin(), seg.times.begin() + cut + 1);
  trunc.states.assign(seg.states.begin(), seg.states.begin() + cut + 1);
  trunc.controls.assign(seg.controls.begin(), seg.controls.begin() + cut + 1);
  trunc.costates.assign(seg.costates.begin(), seg.costates.begin() + cut + 1);
  trunc.duration = trunc.times.back();
  trunc.cost = running;
  Vec x_new = trunc.states.back();
  return SteerResult{std::move(x_new), std::move(trunc), false};
}

}  // namespace kinoplan
