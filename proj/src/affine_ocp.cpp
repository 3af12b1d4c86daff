#include "kinoplan/affine_ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinoplan {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

GramianFactor::GramianFactor(const Mat& G) : G_(G), ldlt_(G) {
  const int n = static_cast<int>(G.rows());
  bool bad = ldlt_.info() != Eigen::Success;
  if (!bad) {
    const Vec d = ldlt_.vectorD();
    const double dmax = d.maxCoeff();
    if (d.minCoeff() <= 1e-13 * std::max(dmax, 1e-30)) bad = true;
  }
  if (bad) {
    const double eps = std::max(1e-10 * G.trace() / n, 1e-300);
    ldlt_.compute(G + eps * Mat::Identity(n, n));
    regularized_ = true;
  }
}

double GramianFactor::half_quad(const Vec& d) const {
  Vec work;
  return half_quad_ws(d, work);
}

double GramianFactor::half_quad_ws(const Vec& d, Vec& work) const {
  work = d;
  ldlt_.solveInPlace(work);
  if (regularized_) {
    // Near-singular G: verify d lies in the numerical column space.
    const double scale = std::max(1.0, d.lpNorm<Eigen::Infinity>());
    if ((G_ * work - d).lpNorm<Eigen::Infinity>() > 1e-8 * scale) return kInf;
  }
  const double q = 0.5 * d.dot(work);
  return q < 0.0 ? 0.0 : q;  // clip round-off negatives; G is PSD
}

Vec GramianFactor::solve(const Vec& d) const {
  const Vec x = ldlt_.solve(d);
  const double scale = std::max(1.0, d.lpNorm<Eigen::Infinity>());
  if ((G_ * x - d).lpNorm<Eigen::Infinity>() > 1e-8 * scale)
    throw UnreachableStateError();
  return x;
}

namespace detail {

GramianSweep::GramianSweep(const AffineModel& model, const Vec& origin,
                           PropagationDirection direction, double dt)
    : model_(model),
      n_(model.n()),
      sign_(direction == PropagationDirection::Forward ? 1.0 : -1.0),
      dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("GramianSweep: dt must be > 0");
  y_.resize(n_ + vech_size(n_));
  y_.head(n_) = origin;
  y_.tail(vech_size(n_)).setZero();
  BRBt_ = model.B * model.R.R_inv() * model.B.transpose();
  g_tmp_.resize(n_, n_);
  s_tmp_.resize(n_, n_);
}

void GramianSweep::rhs(double, const Vec& y, Vec& dy) const {
  dy.resize(y.size());
  dy.head(n_) = sign_ * (model_.A * y.head(n_) + model_.c);
  g_tmp_ = vech_to_sym(y.tail(vech_size(n_)), n_);
  s_tmp_ = model_.A * g_tmp_;
  s_tmp_ += s_tmp_.transpose().eval();
  s_tmp_ = sign_ * s_tmp_ + BRBt_;
  dy.tail(vech_size(n_)) = sym_to_vech(s_tmp_);
}

double GramianSweep::advance(std::optional<double> h_override) {
  const double h = h_override.value_or(dt_);
  Vec ynext(y_.size());
  rk4_step([this](double t, const Vec& y, Vec& dy) { rhs(t, y, dy); }, horizon_,
           h, y_, ynext, work_);
  if (!ynext.allFinite()) throw IntegrationDivergedError(horizon_ + h);
  y_.swap(ynext);
  horizon_ += h;
  ++steps_;
  return horizon_;
}

Vec GramianSweep::x_h() const { return y_.head(n_); }

Mat GramianSweep::gramian() const { return vech_to_sym(y_.tail(vech_size(n_)), n_); }

void GramianSweep::restore(const Vec& flat, double horizon) {
  y_ = flat;
  horizon_ = horizon;
}

}  // namespace detail

GramianTable propagate_gramian(const AffineModel& model, const Vec& x0,
                               double t_end, PropagationDirection direction,
                               const IntegratorConfig& cfg, OdeCounter* counter) {
  if (!(t_end > 0.0))
    throw std::invalid_argument("propagate_gramian: t_end must be > 0");
  const int n = model.n();
  const double sign = direction == PropagationDirection::Forward ? 1.0 : -1.0;
  const Mat BRBt = model.B * model.R.R_inv() * model.B.transpose();

  Vec y0(n + vech_size(n));
  y0.head(n) = x0;
  y0.tail(vech_size(n)).setZero();

  auto rhs = [&](double, const Vec& y, Vec& dy) {
    dy.resize(y.size());
    dy.head(n) = sign * (model.A * y.head(n) + model.c);
    Mat G = vech_to_sym(y.tail(vech_size(n)), n);
    Mat S = model.A * G;
    S += S.transpose().eval();
    S = sign * S + BRBt;
    dy.tail(vech_size(n)) = sym_to_vech(S);
  };
  const OdeTable raw = integrate(rhs, y0, 0.0, t_end, cfg, counter);

  GramianTable table;
  table.direction = direction;
  table.h = cfg.dt;
  table.times = raw.times;
  table.x_h.reserve(raw.size());
  table.G.reserve(raw.size());
  for (const Vec& y : raw.values) {
    table.x_h.push_back(y.head(n));
    table.G.push_back(vech_to_sym(y.tail(vech_size(n)), n));
  }
  return table;
}

double cost_at(const GramianTable& table, const Vec& x1, double tau) {
  if (table.size() == 0) throw std::invalid_argument("cost_at: empty table");
  const double h = table.h;
  const auto idx = static_cast<std::size_t>(std::lround(tau / h));
  if (idx >= table.size() ||
      std::abs(table.times[idx] - tau) > 1e-9 * std::max(1.0, tau))
    throw std::invalid_argument("cost_at: tau is not on the table grid");
  if (idx == 0) return x1.isApprox(table.x_h[0], 1e-12) ? 0.0 : kInf;
  const GramianFactor factor(table.G[idx]);
  return tau + factor.half_quad(x1 - table.x_h[idx]);
}

DistanceResult optimal_final_time(const AffineModel& model, const Vec& x0,
                                  const Vec& x1, const AffineOcpConfig& cfg) {
  detail::GramianSweep sweep(model, x0, PropagationDirection::Forward, cfg.dt);

  DistanceResult out;
  // Bracket bookkeeping for the parabolic refinement around the best grid
  // point: flattened states at tau* - dt and tau*, plus the three costs.
  // Refinement only fires when both bracket gaps equal dt (the tau_max tail
  // step may be shorter).
  Vec left_flat, best_flat;
  double left_cost = kInf, right_cost = kInf;
  double left_gap = 0.0, right_gap = 0.0;
  bool pending_right = false;

  Vec prev_flat = sweep.flat_state();
  double prev_cost = kInf;

  while (true) {
    double h = cfg.dt;
    bool last = false;
    if (sweep.horizon() + h >= cfg.tau_max - 1e-12) {
      h = cfg.tau_max - sweep.horizon();
      last = true;
      if (h <= 0.0) break;
    }
    const double tau = sweep.advance(h);
    const GramianFactor factor(sweep.gramian());
    const double c = tau + factor.half_quad(x1 - sweep.x_h());

    if (pending_right) {
      right_cost = c;
      right_gap = h;
      pending_right = false;
    }
    if (c < out.cost_grid) {
      out.cost_grid = c;
      out.tau_grid = tau;
      left_flat = prev_flat;
      left_cost = prev_cost;
      left_gap = h;
      best_flat = sweep.flat_state();
      right_cost = kInf;
      pending_right = true;
    }
    prev_flat = sweep.flat_state();
    prev_cost = c;

    if (tau >= out.cost_grid) {
      out.valid = true;
      break;
    }
    if (last) break;
  }

  out.cost = out.cost_grid;
  out.tau_star = out.tau_grid;
  if (!cfg.refine_tau || !std::isfinite(out.cost_grid)) return out;
  if (!(std::isfinite(left_cost) && std::isfinite(right_cost)) ||
      std::abs(left_gap - cfg.dt) > 1e-15 || std::abs(right_gap - cfg.dt) > 1e-15)
    return out;

  // Sub-grid refinement inside the bracket (tau*-dt, tau*+dt): a parabolic
  // first guess, then a few secant iterations on C'(tau) = H(tau), which is
  // available in closed form from the sweep state. Narrow cost wells leave
  // C' at the grid minimum as large as O(1/dt); downstream solvers key
  // their free-time updates off this value, so it is worth polishing.
  const Mat BRBt = model.B * model.R.R_inv() * model.B.transpose();
  detail::GramianSweep probe(model, x0, PropagationDirection::Forward, cfg.dt);
  const double tau_lo = out.tau_grid - cfg.dt;
  auto eval_at = [&](double tau_v, double& cost_v, double& dcost_v) {
    if (tau_v >= out.tau_grid) {
      probe.restore(best_flat, out.tau_grid);
      if (tau_v > out.tau_grid) probe.advance(tau_v - out.tau_grid);
    } else {
      probe.restore(left_flat, tau_lo);
      probe.advance(tau_v - tau_lo);
    }
    const GramianFactor factor(probe.gramian());
    const Vec d = x1 - probe.x_h();
    cost_v = tau_v + factor.half_quad(d);
    if (!std::isfinite(cost_v)) {
      dcost_v = 0.0;
      return false;
    }
    const Vec lambda_tau = -factor.solve(d);
    const Vec Btl = model.B.transpose() * lambda_tau;
    dcost_v = 1.0 - 0.5 * Btl.dot(model.R.R_inv() * Btl) +
              lambda_tau.dot(model.A * x1 + model.c);
    return true;
  };

  const double hi = out.tau_grid + cfg.dt;
  const double lo = std::max(tau_lo, 0.25 * cfg.dt);
  double t0 = out.tau_grid, t1;
  double c0, g0, c1, g1;
  if (!eval_at(t0, c0, g0)) return out;
  const double denom = left_cost - 2.0 * out.cost_grid + right_cost;
  if (denom > 1e-14) {
    t1 = std::clamp(t0 + 0.5 * cfg.dt * (left_cost - right_cost) / denom, lo, hi);
  } else {
    t1 = std::clamp(t0 - 0.25 * cfg.dt * (g0 > 0 ? 1.0 : -1.0), lo, hi);
  }
  if (c0 < out.cost) {
    out.cost = c0;
    out.tau_star = t0;
  }
  for (int it = 0; it < 6; ++it) {
    if (std::abs(t1 - t0) < 1e-14) break;
    if (!eval_at(t1, c1, g1)) break;
    if (c1 < out.cost) {
      out.cost = c1;
      out.tau_star = t1;
    }
    if (std::abs(g1) < 1e-9 || std::abs(g1 - g0) < 1e-14) break;
    const double t2 = std::clamp(t1 - g1 * (t1 - t0) / (g1 - g0), lo, hi);
    t0 = t1;
    c0 = c1;
    g0 = g1;
    t1 = t2;
  }
  return out;
}

double segment_quadrature_cost(const TrajectorySegment& seg, const CostWeights& R) {
  std::vector<double> integrand(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i)
    integrand[i] = 1.0 + R.control_cost(seg.controls[i]);
  return integrate_samples(seg.times, integrand);
}

TrajectorySegment solve_affine(const AffineModel& model, const Vec& x0,
                               const Vec& x1, const AffineOcpConfig& cfg,
                               std::optional<double> tau_in) {
  double tau;
  double cost_from_scan = kInf;
  if (tau_in) {
    tau = *tau_in;
    if (!(tau > 0.0)) throw std::invalid_argument("solve_affine: tau must be > 0");
  } else {
    const DistanceResult res = optimal_final_time(model, x0, x1, cfg);
    if (!std::isfinite(res.cost)) throw UnreachableStateError();
    tau = res.tau_star;
    cost_from_scan = res.cost;
  }

  // Uniform grid with an even interval count (Simpson-friendly artifacts).
  int steps = std::max(4, static_cast<int>(std::ceil(tau / cfg.dt)));
  if (steps % 2 != 0) ++steps;
  const double h = tau / steps;

  detail::GramianSweep sweep(model, x0, PropagationDirection::Forward, h);
  for (int k = 0; k < steps; ++k) sweep.advance();
  const GramianFactor factor(sweep.gramian());
  const Vec d = x1 - sweep.x_h();
  const Vec lambda_tau = -factor.solve(d);
  const double cost =
      std::isfinite(cost_from_scan) ? cost_from_scan : tau + factor.half_quad(d);

  const int n = model.n();
  const Mat BRBt = model.B * model.R.R_inv() * model.B.transpose();
  auto bvp1 = [&](double, const Vec& y, Vec& dy) {
    dy.resize(2 * n);
    dy.head(n) = model.A * y.head(n) - BRBt * y.tail(n) + model.c;
    dy.tail(n) = -model.A.transpose() * y.tail(n);
  };
  Vec y_tau(2 * n);
  y_tau.head(n) = x1;
  y_tau.tail(n) = lambda_tau;
  IntegratorConfig icfg{h};
  const OdeTable back = integrate(bvp1, y_tau, tau, 0.0, icfg);

  TrajectorySegment seg;
  seg.duration = tau;
  seg.cost = cost;
  const std::size_t count = back.size();
  seg.times.resize(count);
  seg.states.resize(count);
  seg.costates.resize(count);
  seg.controls.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = count - 1 - i;  // ascending time
    seg.times[i] = back.times[j] < 0.0 ? 0.0 : back.times[j];
    seg.states[i] = back.values[j].head(n);
    seg.costates[i] = back.values[j].tail(n);
    seg.controls[i] = -model.R.R_inv() * (model.B.transpose() * seg.costates[i]);
  }
  seg.times.front() = 0.0;
  seg.times.back() = tau;
  return seg;
}

}  // namespace kinoplan
