#pragma once

#include <optional>
#include <vector>

#include "kinoplan/affine_ocp.hpp"
#include "kinoplan/dynamics.hpp"

namespace kinoplan {

struct SolverConfig {
  int max_iters = 30;
  double boundary_tol = 1e-4;     // relative state residual at the fixed end
  double hamiltonian_tol = 1e-3;  // max |H(t)| allowed at convergence
  double step_size = 0.1;         // final-time gradient step (SA)
  double newton_damping = 1.0;    // initial Newton step scale (VE)
  double dt = 1e-3;
  double tau_min = 1e-3;
  double tau_max = 50.0;
  bool fix_final_time = false;  // hold tau at the initial guess (tests)
  /// When the plain iteration fails, retry through intermediate targets
  /// x0 -> x_alpha -> x1 (2, then 4, ... stages up to this many doubling
  /// levels), each stage seeded with the previous stage's solution. Zero
  /// disables the fallback (the planner does: a failed edge is just
  /// discarded there).
  int continuation_levels = 2;
};

struct IterationRecord {
  double tau = 0.0;
  double cost = 0.0;
  double boundary_residual = 0.0;     // relative, at the shooting end
  double hamiltonian_residual = 0.0;  // max |H| over the grid
  double iterate_change = 0.0;        // sup-norm change of (x, lambda)
  long long ode_dims = 0;             // scalar first-order ODEs integrated
};

struct TpbvpSolution {
  TrajectorySegment segment;
  bool converged = false;
  int iterations = 0;
  std::vector<IterationRecord> history;

  double final_boundary_residual() const {
    return history.empty() ? std::numeric_limits<double>::infinity()
                           : history.back().boundary_residual;
  }
  double final_hamiltonian_residual() const {
    return history.empty() ? std::numeric_limits<double>::infinity()
                           : history.back().hamiltonian_residual;
  }
};

/// Initial iterate shared by both solvers: the optimal trajectory of the
/// model linearized at x0 (u_hat = 0). Callers that already solved the
/// affine problem (Steer, the near-queries) can hand their segment in
/// directly through the seed parameter of solve_sa / solve_ve.
struct AffineSeed {
  AffineModel affine;
  TrajectorySegment segment;
};

AffineSeed initial_guess(const SystemModel& model, const Vec& x0, const Vec& x1,
                         const CostWeights& R, const SolverConfig& cfg);

/// Successive approximation: per iteration, updates the final time by the
/// cost gradient, then solves one linear TPBVP whose forcing terms come
/// from the previous iterate (particular costate backward, forced
/// homogeneous state forward, terminal costate through the Gramian, coupled
/// state/costate backward). The Gramian itself is integrated once and
/// reused across iterations.
TpbvpSolution solve_sa(const SystemModel& model, const CostWeights& R,
                       const Vec& x0, const Vec& x1, const SolverConfig& cfg,
                       const AffineSeed* seed = nullptr);

/// Variation of extremals: damped Newton shooting on (lambda(0), tau)
/// against the residual (x(tau) - x1, H(tau)), with sensitivities from the
/// influence-matrix ODE integrated jointly with the trajectory.
TpbvpSolution solve_ve(const SystemModel& model, const CostWeights& R,
                       const Vec& x0, const Vec& x1, const SolverConfig& cfg,
                       const AffineSeed* seed = nullptr);

/// Right-hand side of the influence-matrix ODE: stacked (P_x, P_lambda)
/// multiplied by the Hessian-block matrix of the minimized Hamiltonian,
/// obtained by central finite differences of the analytic state/costate
/// field.
void influence_rhs(const SystemModel& model, const Vec& x, const Vec& lambda,
                   const CostWeights& R, const Mat& P_x, const Mat& P_lambda,
                   Mat& dP_x, Mat& dP_lambda);

/// Influence matrices along a fixed-(lambda0, tau) extremal, for the
/// finite-difference cross-checks.
struct InfluenceTable {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> costates;
  std::vector<Mat> P_x;
  std::vector<Mat> P_lambda;
};

InfluenceTable integrate_influence(const SystemModel& model, const CostWeights& R,
                                   const Vec& x0, const Vec& lambda0, double tau,
                                   double dt);

/// d J / d tau of the SA iterate at the endpoint (x_end is the fixed
/// boundary state): 1 - l'BRinvB'l/2 + lp'gu Rinv gu' lp/2 + l'(A x + g),
/// with u at the endpoint reconstructed from both costates.
double final_time_gradient(const SystemModel& model, const Vec& x_end,
                           const Vec& lambda_end, const Vec& lambda_prev_end,
                           const AffineModel& affine, const CostWeights& R);

}  // namespace kinoplan
