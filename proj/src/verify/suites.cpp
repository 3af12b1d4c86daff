#include <cmath>
#include <cstdio>
#include <set>

#include "kinoplan/metric.hpp"
#include "kinoplan/tpbvp.hpp"
#include "kinoplan/verify.hpp"
#include "kinoplan/world.hpp"

namespace kinoplan::verify {

namespace {

CheckResult check(const std::string& name, bool pass, const std::string& detail) {
  return {name, pass, detail};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Vec bvp2_endpoint(const SystemModel& model, const CostWeights& R, const Vec& x0,
                  const Vec& lambda0, double tau, double dt) {
  const int n = model.state_dim();
  auto rhs = [&](double, const Vec& y, Vec& dy) {
    const Vec x = y.head(n);
    const Vec l = y.tail(n);
    dy.resize(2 * n);
    const Vec u = optimal_control(model, x, l, R);
    dy.head(n) = eval_f(model, x, u);
    dy.tail(n) = -f_jacobian_x(model, x, u).transpose() * l;
  };
  Vec y0(2 * n);
  y0.head(n) = x0;
  y0.tail(n) = lambda0;
  return integrate(rhs, y0, 0.0, tau, IntegratorConfig{dt}).back().head(n);
}

}  // namespace

std::vector<CheckResult> suite_gradients() {
  std::vector<CheckResult> out;

  // Influence-matrix columns against finite differences of the shooting map
  // on the pendulum.
  {
    const Pendulum model;
    const CostWeights R = CostWeights::identity(1);
    const Vec x0 = Vec::Zero(2);
    const double tau = 0.8, dt = 1e-3;

    const AffineModel affine = linearize(model, x0, Vec::Zero(1), R);
    Vec x1(2);
    x1 << 0.9, 0.0;
    const AffineOcpConfig ocp{dt, 50.0, true};
    const TrajectorySegment guess = solve_affine(affine, x0, x1, ocp, tau);
    const Vec lambda0 = guess.costates.front();

    const InfluenceTable table = integrate_influence(model, R, x0, lambda0, tau, dt);
    const Mat& Px = table.P_x.back();

    double worst = 0.0;
    const double delta = 1e-6;
    for (int j = 0; j < 2; ++j) {
      Vec lp = lambda0, lm = lambda0;
      lp[j] += delta;
      lm[j] -= delta;
      const Vec col = (bvp2_endpoint(model, R, x0, lp, tau, dt) -
                       bvp2_endpoint(model, R, x0, lm, tau, dt)) /
                      (2.0 * delta);
      const double err =
          (col - Px.col(j)).norm() / std::max(1.0, Px.col(j).norm());
      worst = std::max(worst, err);
    }
    out.push_back(check("influence_matrix_fd_pendulum", worst <= 1e-3,
                        "max rel err " + fmt(worst)));
  }

  // Final-time gradient against the numerical derivative of the affine cost
  // curve on the double integrator.
  {
    const DoubleIntegrator model;
    const CostWeights R = CostWeights::identity(1);
    AffineModel affine = linearize(model, Vec::Zero(2), Vec::Zero(1), R);
    Vec x0 = Vec::Zero(2), x1(2);
    x1 << 1.0, 0.0;
    const AffineOcpConfig ocp{1e-3, 50.0, true};

    auto cost_at_tau = [&](double tau) {
      return solve_affine(affine, x0, x1, ocp, tau).cost;
    };
    auto gradient_at = [&](double tau) {
      const TrajectorySegment seg = solve_affine(affine, x0, x1, ocp, tau);
      const Vec le = seg.costates.back();
      return final_time_gradient(model, x1, le, le, affine, R);
    };

    const double tau_star = optimal_final_time(affine, x0, x1, ocp).tau_star;
    const double h = 1e-4;

    const double g_at_star = gradient_at(tau_star);
    const double fd_star =
        (cost_at_tau(tau_star + h) - cost_at_tau(tau_star - h)) / (2.0 * h);
    out.push_back(check("final_time_gradient_at_optimum",
                        std::abs(g_at_star) <= 1e-3 && std::abs(fd_star) <= 1e-2,
                        "grad " + fmt(g_at_star) + ", fd " + fmt(fd_star)));

    const double tau_lo = 0.6 * tau_star;
    const double g_lo = gradient_at(tau_lo);
    const double fd_lo =
        (cost_at_tau(tau_lo + h) - cost_at_tau(tau_lo - h)) / (2.0 * h);
    out.push_back(check("final_time_gradient_matches_fd",
                        std::abs(g_lo - fd_lo) <= 1e-3 && g_lo < 0.0,
                        "grad " + fmt(g_lo) + " vs fd " + fmt(fd_lo)));
  }
  return out;
}

std::vector<CheckResult> suite_oracle() {
  std::vector<CheckResult> out;
  const DoubleIntegrator model;
  const CostWeights R = CostWeights::identity(1);
  const AffineModel affine = linearize(model, Vec::Zero(2), Vec::Zero(1), R);
  Vec x0 = Vec::Zero(2), x1(2);
  x1 << 1.0, 0.0;

  {
    const AffineOcpConfig ocp{1e-3, 50.0, true};
    const DistanceResult res = optimal_final_time(affine, x0, x1, ocp);
    const double oracle =
        transcription_optimal_cost(affine, x0, x1, 0.8, 4.0, 321, 96);
    const double rel = std::abs(res.cost - oracle) / oracle;
    out.push_back(check("double_integrator_cost_vs_transcription", rel <= 5e-3,
                        "gramian " + fmt(res.cost) + " vs oracle " + fmt(oracle) +
                            " (rel " + fmt(rel) + ")"));
  }
  {
    double worst = 0.0;
    for (double tau : {1.0, 2.5}) {
      const GramianTable table = propagate_gramian(
          affine, x0, tau, PropagationDirection::Forward, IntegratorConfig{1e-3});
      Mat expected(2, 2);
      expected << tau * tau * tau / 3.0, tau * tau / 2.0, tau * tau / 2.0, tau;
      worst = std::max(
          worst, (table.G.back() - expected).lpNorm<Eigen::Infinity>());
    }
    out.push_back(check("double_integrator_closed_form_gramian", worst <= 1e-8,
                        "max abs err " + fmt(worst)));
  }
  return out;
}

std::vector<CheckResult> suite_hamiltonian(int instances) {
  std::vector<CheckResult> out;
  const Pendulum model;
  const CostWeights R = CostWeights::identity(1);
  SolverConfig cfg;
  cfg.dt = 1e-3;

  SplitMix64 rng(20240201);
  int converged = 0, tested = 0;
  double worst_h = 0.0, worst_var = 0.0;
  while (converged < instances && tested < instances * 8) {
    ++tested;
    Vec x0(2), x1(2);
    x0 << rng.uniform(-1.0, 1.0), rng.uniform(-1.5, 1.5);
    x1 << x0[0] + rng.uniform(-1.2, 1.2), rng.uniform(-1.5, 1.5);
    const bool use_ve = (tested % 2) == 0;
    TpbvpSolution sol;
    try {
      sol = use_ve ? solve_ve(model, R, x0, x1, cfg)
                   : solve_sa(model, R, x0, x1, cfg);
    } catch (const std::exception&) {
      continue;
    }
    if (!sol.converged) continue;
    ++converged;
    double hmin = std::numeric_limits<double>::infinity(), hmax = -hmin;
    for (std::size_t i = 0; i < sol.segment.size(); ++i) {
      const double h = hamiltonian(model, sol.segment.states[i],
                                   sol.segment.costates[i], R);
      hmin = std::min(hmin, h);
      hmax = std::max(hmax, h);
      worst_h = std::max(worst_h, std::abs(h));
    }
    worst_var = std::max(worst_var, hmax - hmin);
  }
  out.push_back(check("transversality_max_abs_H",
                      converged == instances && worst_h <= 1e-3,
                      std::to_string(converged) + "/" + std::to_string(instances) +
                          " converged, max |H| " + fmt(worst_h)));
  out.push_back(check("hamiltonian_constant_along_trajectory", worst_var <= 1e-3,
                      "max variation " + fmt(worst_var)));
  return out;
}

std::vector<CheckResult> suite_metric(int trees, bool check_early_exit) {
  std::vector<CheckResult> out;
  const DoubleIntegrator model;
  const CostWeights R = CostWeights::identity(1);
  const AffineOcpConfig cfg{5e-3, 12.0, true};

  SplitMix64 rng(777);
  bool nearest_ok = true, back_ok = true, fwd_ok = true, exit_ok = true;
  for (int t = 0; t < trees; ++t) {
    std::vector<Vec> nodes;
    for (int i = 0; i < 20; ++i) {
      Vec v(2);
      v << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
      nodes.push_back(v);
    }
    Vec q(2);
    q << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
    const double radius = rng.uniform(1.5, 4.0);

    // Brute force over pairwise distances at grid resolution; the sweeps
    // never refine below the grid.
    int bf_nearest = 0;
    std::vector<int> bf_back, bf_fwd;
    for (int i = 0; i < 20; ++i) {
      const double din = aqr_distance(model, nodes[i], q, R, cfg, &q).cost_grid;
      if (din <
          aqr_distance(model, nodes[bf_nearest], q, R, cfg, &q).cost_grid)
        bf_nearest = i;
      if (din <= radius) bf_back.push_back(i);
      const double dout = aqr_distance(model, q, nodes[i], R, cfg, &q).cost_grid;
      if (dout <= radius) bf_fwd.push_back(i);
    }

    if (nearest(nodes, q, model, R, cfg) != bf_nearest) nearest_ok = false;
    if (near_backward(nodes, q, radius, model, R, cfg) != bf_back) back_ok = false;
    if (near_forward(nodes, q, radius, model, R, cfg) != bf_fwd) fwd_ok = false;

    if (check_early_exit) {
      if (nearest(nodes, q, model, R, cfg, nullptr, false) !=
          nearest(nodes, q, model, R, cfg, nullptr, true))
        exit_ok = false;
      if (near_backward(nodes, q, radius, model, R, cfg, nullptr, false) !=
          near_backward(nodes, q, radius, model, R, cfg, nullptr, true))
        exit_ok = false;
      if (near_forward(nodes, q, radius, model, R, cfg, nullptr, false) !=
          near_forward(nodes, q, radius, model, R, cfg, nullptr, true))
        exit_ok = false;
    }
  }
  out.push_back(check("nearest_matches_brute_force", nearest_ok,
                      std::to_string(trees) + " trees"));
  out.push_back(check("near_backward_matches_brute_force", back_ok, ""));
  out.push_back(check("near_forward_matches_brute_force", fwd_ok, ""));
  if (check_early_exit)
    out.push_back(check("early_exit_equivalence", exit_ok, ""));
  return out;
}

int run_suite(const std::string& name) {
  std::vector<CheckResult> results;
  if (name == "gradients") results = suite_gradients();
  else if (name == "oracle") results = suite_oracle();
  else if (name == "hamiltonian") results = suite_hamiltonian();
  else if (name == "metric") results = suite_metric();
  else {
    std::fprintf(stderr, "unknown verify suite '%s' (gradients|oracle|hamiltonian|metric)\n",
                 name.c_str());
    return 1;
  }
  bool all = true;
  for (const CheckResult& r : results) {
    std::printf("[%s] %s%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.empty() ? "" : ": ", r.detail.c_str());
    all = all && r.pass;
  }
  return all ? 0 : 1;
}

}  // namespace kinoplan::verify
