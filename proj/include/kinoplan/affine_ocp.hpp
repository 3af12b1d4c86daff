#pragma once

#include <optional>
#include <vector>

#include "kinoplan/dynamics.hpp"
#include "kinoplan/numeric.hpp"

namespace kinoplan {

/// Raised when the endpoint is outside the (numerical) reachable subspace of
/// the Gramian, i.e. the affine connection does not exist at any scanned
/// horizon.
class UnreachableStateError : public std::runtime_error {
 public:
  UnreachableStateError()
      : std::runtime_error("target state unreachable through the Gramian") {}
};

struct AffineOcpConfig {
  double dt = 1e-3;
  double tau_max = 50.0;
  /// One parabolic refinement of tau* through the three bracketing grid
  /// samples; the grid-resolution values stay available either way.
  bool refine_tau = true;
};

enum class PropagationDirection { Forward, Backward };

/// Samples of the homogeneous solution x_h(t) and the weighted reachability
/// Gramian G(t) on a uniform horizon grid starting at 0. Backward tables
/// hold the time-reversed system's forward quantities (G stays PSD).
struct GramianTable {
  PropagationDirection direction = PropagationDirection::Forward;
  double h = 0.0;
  std::vector<double> times;
  std::vector<Vec> x_h;
  std::vector<Mat> G;

  std::size_t size() const { return times.size(); }
};

/// LDLT of a PSD Gramian with the small-trace shift fallback. half_quad
/// returns +inf when the residual is outside the numerical column space.
class GramianFactor {
 public:
  explicit GramianFactor(const Mat& G);

  double half_quad(const Vec& d) const;
  /// Same, with caller-provided workspace (hot loops).
  double half_quad_ws(const Vec& d, Vec& work) const;
  /// G^{-1} d; throws UnreachableStateError outside the column space.
  Vec solve(const Vec& d) const;
  bool regularized() const { return regularized_; }

 private:
  const Mat G_;
  Eigen::LDLT<Mat> ldlt_;
  bool regularized_ = false;
};

/// Integrates IVP1 (x_h and the n(n+1)/2 distinct entries of symmetric G as
/// one flattened first-order system) from 0 to t_end. Backward direction
/// propagates the time-reversed system.
GramianTable propagate_gramian(const AffineModel& model, const Vec& x0,
                               double t_end, PropagationDirection direction,
                               const IntegratorConfig& cfg,
                               OdeCounter* counter = nullptr);

/// C(tau) = tau + (x1 - x_h)' G^{-1} (x1 - x_h) / 2 at a grid time of the
/// table; +inf when unreachable at that horizon.
double cost_at(const GramianTable& table, const Vec& x1, double tau);

struct DistanceResult {
  double cost = std::numeric_limits<double>::infinity();
  double tau_star = 0.0;
  bool valid = false;
  /// Best values at grid resolution (before parabolic refinement); the
  /// metric sweeps are compared against these.
  double cost_grid = std::numeric_limits<double>::infinity();
  double tau_grid = 0.0;
};

/// Scans C(tau) on the integrator grid, tracking the incumbent best cost
/// Cbest and stopping as soon as tau >= Cbest (no later tau can beat it,
/// since C(tau) >= tau) or tau reaches tau_max (then valid = false).
DistanceResult optimal_final_time(const AffineModel& model, const Vec& x0,
                                  const Vec& x1, const AffineOcpConfig& cfg);

/// Time-sampled optimal connection: uniform grid over [0, tau], states,
/// controls, costates, stored cost.
struct TrajectorySegment {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<Vec> costates;
  double duration = 0.0;
  double cost = 0.0;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
};

/// Running cost quadrature (1 + u'Ru/2) over the segment grid.
double segment_quadrature_cost(const TrajectorySegment& seg, const CostWeights& R);

/// Solves BVP1 for the optimal affine connection from x0 to x1. The final
/// time comes from optimal_final_time unless the caller pins it. Terminal
/// costate from the Gramian, then backward integration of the reduced
/// Hamiltonian system.
TrajectorySegment solve_affine(const AffineModel& model, const Vec& x0,
                               const Vec& x1, const AffineOcpConfig& cfg,
                               std::optional<double> tau = std::nullopt);

namespace detail {

/// Incremental stepper for the flattened (x_h, vech G) system; shared by
/// optimal_final_time and the metric sweeps.
class GramianSweep {
 public:
  GramianSweep(const AffineModel& model, const Vec& origin,
               PropagationDirection direction, double dt);

  /// Advance by one grid step (or a shorter tail step); returns the new
  /// horizon.
  double advance(std::optional<double> h_override = std::nullopt);
  double horizon() const { return horizon_; }
  long long steps() const { return steps_; }
  Vec x_h() const;
  Mat gramian() const;
  const Vec& flat_state() const { return y_; }
  void restore(const Vec& flat, double horizon);

 private:
  void rhs(double t, const Vec& y, Vec& dy) const;

  const AffineModel& model_;
  int n_;
  double sign_;
  double dt_;
  double horizon_ = 0.0;
  long long steps_ = 0;
  Vec y_;
  Mat BRBt_;
  mutable Mat g_tmp_, s_tmp_;
  kinoplan::detail::Rk4Work work_;
};

}  // namespace detail

}  // namespace kinoplan
