#include "kinoplan/tpbvp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kinoplan {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Grid {
  int steps;
  double h;
};

// Uniform grid with an even interval count; endpoints always sampled.
Grid make_grid(double tau, double dt) {
  int steps = std::max(4, static_cast<int>(std::ceil(tau / dt)));
  if (steps % 2 != 0) ++steps;
  return {steps, tau / steps};
}

double sup_change(const SampledCurve& now, const SampledCurve& prev) {
  double worst = 0.0;
  Vec tmp;
  for (std::size_t i = 0; i < now.size(); ++i) {
    const double t = now.t_begin() + now.step() * static_cast<double>(i);
    prev.eval_into(t, tmp);
    worst = std::max(worst, (now.sample(i) - tmp).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

/// dt-grid cache of the SA Gramian: eq. sa2 carries no iterate-dependent
/// terms, so one table serves every iteration. Sub-grid final times are
/// completed with a single tail RK4 step rather than a fresh integration.
class GramianCache {
 public:
  GramianCache(const AffineModel& affine, double dt)
      : affine_(affine),
        n_(affine.n()),
        dt_(dt),
        BRBt_(affine.B * affine.R.R_inv() * affine.B.transpose()) {
    flat_.push_back(Vec::Zero(vech_size(n_)));
  }

  Mat at(double tau, OdeCounter* counter) {
    auto idx = static_cast<std::size_t>(tau / dt_ + 1e-12);
    ensure(idx, tau, counter);
    idx = std::min(idx, flat_.size() - 1);
    Vec y = flat_[idx];
    const double base = dt_ * static_cast<double>(idx);
    const double rem = tau - base;
    if (rem > 1e-12 * std::max(1.0, tau)) {
      Vec ynext(y.size());
      rk4_step([this](double t, const Vec& v, Vec& dv) { rhs(t, v, dv); }, base,
               rem, y, ynext, work_);
      y.swap(ynext);
    }
    return vech_to_sym(y, n_);
  }

 private:
  void rhs(double, const Vec& y, Vec& dy) const {
    Mat G = vech_to_sym(y, n_);
    Mat S = affine_.A * G;
    S += S.transpose().eval();
    S += BRBt_;
    dy = sym_to_vech(S);
  }

  void ensure(std::size_t idx, double tau, OdeCounter* counter) {
    if (idx < flat_.size()) return;
    // 25% horizon margin so modest final-time growth does not retrigger
    // integration.
    const double target = std::max(tau * 1.25, dt_ * static_cast<double>(idx + 1));
    const std::size_t last = flat_.size() - 1;
    const double t_from = dt_ * static_cast<double>(last);
    const OdeTable ext = integrate(
        [this](double t, const Vec& v, Vec& dv) { rhs(t, v, dv); }, flat_[last],
        t_from, target, IntegratorConfig{dt_}, counter);
    for (std::size_t i = 1; i < ext.size(); ++i) {
      const auto k = static_cast<std::size_t>(ext.times[i] / dt_ + 0.5);
      if (k == flat_.size() &&
          std::abs(ext.times[i] - dt_ * static_cast<double>(k)) < 1e-9)
        flat_.push_back(ext.values[i]);
    }
  }

  const AffineModel& affine_;
  int n_;
  double dt_;
  Mat BRBt_;
  std::vector<Vec> flat_;
  detail::Rk4Work work_;
};

struct SaIterate {
  double tau = 0.0;
  double h = 0.0;
  SampledCurve x, lambda, u;
  double cost = kInf;
  double boundary_residual = kInf;  // relative, at t = 0
  double max_hamiltonian = kInf;
};

SaIterate iterate_from_segment(const SystemModel& model, const CostWeights& R,
                               const TrajectorySegment& seg, const Vec& x0) {
  SaIterate it;
  it.tau = seg.duration;
  it.h = seg.times[1] - seg.times[0];
  it.x = SampledCurve(0.0, it.h, seg.states);
  it.lambda = SampledCurve(0.0, it.h, seg.costates);
  it.u = SampledCurve(0.0, it.h, seg.controls);
  it.cost = segment_quadrature_cost(seg, R);
  it.boundary_residual =
      (seg.states.front() - x0).norm() / (1.0 + x0.norm());
  it.max_hamiltonian = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i)
    it.max_hamiltonian = std::max(
        it.max_hamiltonian,
        std::abs(hamiltonian(model, seg.states[i], seg.costates[i], R)));
  return it;
}

/// One SA pass at the given final time: particular costate backward (eq.
/// lp), forced homogeneous state forward (eq. sa1), terminal costate via
/// the Gramian, coupled state/costate backward (eq. alg2), control samples
/// (eq. con_seq). The forcing terms depend only on the previous iterate, so
/// they are tabulated on a half-step grid up front and the RK4 stages just
/// interpolate them.
SaIterate run_sa_pass(const SystemModel& model, const CostWeights& R,
                      const Vec& x0, const Vec& x1, const AffineModel& affine,
                      double tau, double dt, const SaIterate& prev,
                      GramianCache& gramian, OdeCounter* counter) {
  const int n = model.state_dim();
  const int m = model.control_dim();
  const Grid grid = make_grid(tau, dt);
  const IntegratorConfig icfg{grid.h};

  const Mat BRinv = affine.B * R.R_inv();
  const Mat BRBt = BRinv * affine.B.transpose();
  const Mat At = affine.A.transpose();
  const bool state_dep_B = model.input_matrix_depends_on_state();

  // Forcing tables at half-grid resolution:
  //   force1 = g - B Rinv g_u' lprev   (state equations)
  //   gxl    = g_x' lprev              (costate equations)
  //   gul    = g_u' lprev              (control reconstruction, grid points)
  const int half_count = 2 * grid.steps + 1;
  std::vector<Vec> force1(half_count, Vec(n)), gxl(half_count, Vec(n)),
      gul(half_count, Vec(m));
  {
    Vec xp(n), up(m), lprev(n), a_buf(n);
    Mat B_buf(n, m), J_buf(n, n);
    std::vector<Mat> dB_buf;
    for (int j = 0; j < half_count; ++j) {
      const double t = 0.5 * grid.h * static_cast<double>(j);
      prev.x.eval_into(t, xp);
      prev.u.eval_into(t, up);
      prev.lambda.eval_into(t, lprev);
      model.drift(xp, a_buf);
      model.input_matrix(xp, B_buf);
      gul[j].noalias() = (B_buf - affine.B).transpose() * lprev;
      force1[j] = a_buf;
      force1[j].noalias() += B_buf * up;
      force1[j].noalias() -= affine.A * xp;
      force1[j].noalias() -= affine.B * up;
      force1[j].noalias() -= BRinv * gul[j];
      model.drift_jacobian(xp, J_buf);
      if (state_dep_B) {
        model.input_matrix_jacobian(xp, dB_buf);
        for (int k = 0; k < n; ++k)
          if (dB_buf[k].size() != 0 && !dB_buf[k].isZero(0.0))
            J_buf.col(k) += dB_buf[k] * up;
      }
      gxl[j].noalias() = (J_buf - affine.A).transpose() * lprev;
    }
  }
  const SampledCurve force1_curve(0.0, 0.5 * grid.h, std::move(force1));
  const SampledCurve gxl_curve(0.0, 0.5 * grid.h, std::move(gxl));

  Vec f_at(n), gxl_at(n), lp_at(n);

  // (1) particular costate, backward from lambda_p(tau) = 0
  auto rhs_lp = [&](double t, const Vec& y, Vec& dy) {
    gxl_curve.eval_into(t, gxl_at);
    dy.noalias() = -(At * y);
    dy -= gxl_at;
  };
  const OdeTable lp_back = integrate(rhs_lp, Vec::Zero(n), tau, 0.0, icfg, counter);
  std::vector<Vec> lp_fwd(lp_back.values.rbegin(), lp_back.values.rend());
  const SampledCurve lp_curve(0.0, grid.h, std::move(lp_fwd));

  // (2) forced homogeneous state, forward from x0
  auto rhs_xh = [&](double t, const Vec& y, Vec& dy) {
    force1_curve.eval_into(t, f_at);
    lp_curve.eval_into(t, lp_at);
    dy.noalias() = affine.A * y;
    dy.noalias() -= BRBt * lp_at;
    dy += f_at;
  };
  const OdeTable xh = integrate(rhs_xh, x0, 0.0, tau, icfg, counter);

  // (3) terminal costate through the reused Gramian
  const Mat G_tau = gramian.at(tau, counter);
  const GramianFactor factor(G_tau);
  const Vec lambda_tau = -factor.solve(x1 - xh.back());

  // (4) coupled state/costate, backward from (x1, lambda_tau)
  auto rhs_coupled = [&](double t, const Vec& y, Vec& dy) {
    force1_curve.eval_into(t, f_at);
    gxl_curve.eval_into(t, gxl_at);
    dy.resize(2 * n);
    dy.head(n).noalias() = affine.A * y.head(n);
    dy.head(n).noalias() -= BRBt * y.tail(n);
    dy.head(n) += f_at;
    dy.tail(n).noalias() = -(At * y.tail(n));
    dy.tail(n) -= gxl_at;
  };
  Vec y_tau(2 * n);
  y_tau.head(n) = x1;
  y_tau.tail(n) = lambda_tau;
  const OdeTable coupled = integrate(rhs_coupled, y_tau, tau, 0.0, icfg, counter);

  SaIterate out;
  out.tau = tau;
  out.h = grid.h;
  const std::size_t count = coupled.size();
  std::vector<Vec> xs(count), ls(count), us(count);
  std::vector<double> integrand(count);
  out.max_hamiltonian = 0.0;
  Vec B_t_l(m), u_star(m), a_buf(n), fx(n);
  Mat B_buf(n, m);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = count - 1 - i;  // ascending time
    xs[i] = coupled.values[j].head(n);
    ls[i] = coupled.values[j].tail(n);
    // (5) control sequence: u = -Rinv (B' l + g_u' lprev)
    B_t_l.noalias() = affine.B.transpose() * ls[i];
    B_t_l += gul[2 * i];
    us[i].noalias() = -(R.R_inv() * B_t_l);
    integrand[i] = 1.0 + R.control_cost(us[i]);
    // Hamiltonian residual at the minimizing control.
    model.input_matrix(xs[i], B_buf);
    B_t_l.noalias() = B_buf.transpose() * ls[i];
    u_star.noalias() = -(R.R_inv() * B_t_l);
    model.drift(xs[i], a_buf);
    fx = a_buf;
    fx.noalias() += B_buf * u_star;
    const double h_val = 1.0 + R.control_cost(u_star) + ls[i].dot(fx);
    out.max_hamiltonian = std::max(out.max_hamiltonian, std::abs(h_val));
  }
  out.boundary_residual = (xs.front() - x0).norm() / (1.0 + x0.norm());
  out.cost = integrate_samples_uniform(grid.h, integrand);
  out.x = SampledCurve(0.0, grid.h, std::move(xs));
  out.lambda = SampledCurve(0.0, grid.h, std::move(ls));
  out.u = SampledCurve(0.0, grid.h, std::move(us));
  return out;
}

TrajectorySegment segment_from_iterate(const SaIterate& it) {
  TrajectorySegment seg;
  const std::size_t count = it.x.size();
  seg.times.resize(count);
  seg.states.resize(count);
  seg.costates.resize(count);
  seg.controls.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    seg.times[i] = it.h * static_cast<double>(i);
    seg.states[i] = it.x.sample(i);
    seg.costates[i] = it.lambda.sample(i);
    seg.controls[i] = it.u.sample(i);
  }
  seg.times.back() = it.tau;
  seg.duration = it.tau;
  seg.cost = it.cost;
  return seg;
}

}  // namespace

AffineSeed initial_guess(const SystemModel& model, const Vec& x0, const Vec& x1,
                         const CostWeights& R, const SolverConfig& cfg) {
  AffineSeed seed;
  seed.affine = linearize(model, x0, Vec::Zero(model.control_dim()), R);
  const AffineOcpConfig ocp{cfg.dt, cfg.tau_max, true};
  seed.segment = solve_affine(seed.affine, x0, x1, ocp);
  return seed;
}

namespace {

TpbvpSolution solve_sa_core(const SystemModel& model, const CostWeights& R,
                            const Vec& x0, const Vec& x1, const SolverConfig& cfg,
                            const AffineSeed* seed) {
  AffineSeed local;
  if (seed == nullptr) {
    local = initial_guess(model, x0, x1, R, cfg);
    seed = &local;
  }
  const AffineModel& affine = seed->affine;
  GramianCache gramian(affine, cfg.dt);

  SaIterate cur = iterate_from_segment(model, R, seed->segment, x0);
  cur.tau = std::clamp(cur.tau, cfg.tau_min, cfg.tau_max);
  Vec lambda_end_pp = cur.lambda.sample(cur.lambda.size() - 1);

  TpbvpSolution sol;
  double res_last = kInf;
  double change_last = kInf;
  int grow_count = 0;
  int change_grow_count = 0;
  // Final-time step bookkeeping: fixed nominal step, halved persistently on
  // gradient sign flips (narrow cost wells need far smaller steps than wide
  // ones), and capped relative to the current duration so one bad gradient
  // cannot throw tau across its whole range.
  double step_scale = cfg.step_size;
  double prev_grad = 0.0;
  double prev_grad_tau = 0.0;
  double last_grad = 0.0;

  for (int k = 1; k <= cfg.max_iters; ++k) {
    OdeCounter counter;
    double step = 0.0;
    if (!cfg.fix_final_time) {
      const Vec lambda_end = cur.lambda.sample(cur.lambda.size() - 1);
      const double grad =
          final_time_gradient(model, x1, lambda_end, lambda_end_pp, affine, R);
      last_grad = grad;
      // Final-time optimality within tolerance: leave tau alone (also the
      // fixed point the affine collapse tests rely on).
      if (std::abs(grad) > cfg.hamiltonian_tol) {
        const bool bracketed =
            prev_grad * grad < 0.0 && std::abs(grad - prev_grad) > 1e-14;
        if (bracketed) {
          // Sign change: secant step toward the transversality root.
          step = -grad * (cur.tau - prev_grad_tau) / (grad - prev_grad);
          step_scale = std::max(0.5 * step_scale, 1e-7);
        } else {
          if (prev_grad * grad > 0.0)
            step_scale = std::min(1.25 * step_scale, cfg.step_size);
          step = -step_scale * grad;
        }
        const double cap = 0.25 * cur.tau;
        step = std::clamp(step, -cap, cap);
        prev_grad = grad;
        prev_grad_tau = cur.tau;
      }
    }

    // The tau walk is gradient-driven; the cost check below only guards
    // against blow-ups (single-pass costs carry an O(|dtau|) re-gridding
    // transient that would otherwise mask the true cost slope). A rejected
    // step is halved up to 5 times, then the unshifted pass is taken.
    SaIterate next;
    bool have_next = false;
    bool moved_tau = false;
    for (int bt = 0; bt <= 6 && !have_next; ++bt) {
      if (bt == 6) step = 0.0;
      const bool no_move = step == 0.0;
      const double tau_cand = std::clamp(cur.tau + step, cfg.tau_min, cfg.tau_max);
      SaIterate cand;
      bool ok = true;
      try {
        cand = run_sa_pass(model, R, x0, x1, affine, tau_cand, cfg.dt, cur,
                           gramian, &counter);
      } catch (const IntegrationDivergedError&) {
        ok = false;
      } catch (const UnreachableStateError&) {
        ok = false;
      }
      if (ok && (no_move || cand.cost <= cur.cost * 1.02 + 0.02)) {
        next = std::move(cand);
        have_next = true;
        moved_tau = !no_move && tau_cand != cur.tau;
      } else if (!ok && no_move) {
        break;
      }
      step *= 0.5;
    }
    if (!have_next) {
      sol.iterations = k;
      break;  // diverged before producing an iterate
    }

    const double change =
        std::max(sup_change(next.x, cur.x), sup_change(next.lambda, cur.lambda));
    sol.history.push_back({next.tau, next.cost, next.boundary_residual,
                           next.max_hamiltonian, change, counter.dims});
    sol.iterations = k;

    lambda_end_pp = cur.lambda.sample(cur.lambda.size() - 1);
    cur = std::move(next);

    const bool tau_pinned =
        (cur.tau <= cfg.tau_min + 1e-15 && last_grad > 0.0) ||
        (cur.tau >= cfg.tau_max - 1e-15 && last_grad < 0.0);
    const bool h_ok = cfg.fix_final_time || tau_pinned ||
                      cur.max_hamiltonian <= cfg.hamiltonian_tol;
    if (k >= 2 && change < cfg.boundary_tol &&
        cur.boundary_residual <= cfg.boundary_tol && h_ok) {
      sol.converged = true;
      break;
    }
    // Stuck fixed point: the iterate map stopped moving but a residual
    // still fails and tau did not move either; no further progress is
    // possible.
    if (k >= 2 && change < cfg.boundary_tol && !moved_tau) break;
    // Divergence: meaningful growth of the boundary residual or of the
    // iterate change three iterations in a row (noise-level values exempt).
    if (cur.boundary_residual > 1.5 * res_last &&
        cur.boundary_residual > cfg.boundary_tol) {
      if (++grow_count >= 3) break;
    } else {
      grow_count = 0;
    }
    if (change > 1.5 * change_last && change > 100.0 * cfg.boundary_tol) {
      if (++change_grow_count >= 3) break;
    } else {
      change_grow_count = 0;
    }
    res_last = std::min(res_last, cur.boundary_residual);
    change_last = change;
  }

  sol.segment = segment_from_iterate(cur);
  return sol;
}

}  // namespace

double final_time_gradient(const SystemModel& model, const Vec& x_end,
                           const Vec& lambda_end, const Vec& lambda_prev_end,
                           const AffineModel& affine, const CostWeights& R) {
  const Mat gu = residual_g_u(model, x_end, affine);
  const Vec u_end = -R.R_inv() * (affine.B.transpose() * lambda_end +
                                  gu.transpose() * lambda_prev_end);
  const Vec g_end = residual_g(model, x_end, u_end, affine);
  const Vec Bt_l = affine.B.transpose() * lambda_end;
  const Vec gut_lp = gu.transpose() * lambda_prev_end;
  return 1.0 - 0.5 * Bt_l.dot(R.R_inv() * Bt_l) +
         0.5 * gut_lp.dot(R.R_inv() * gut_lp) +
         lambda_end.dot(affine.A * x_end + g_end);
}

namespace {

/// Jacobian of the extremal field F(x, lambda) = (xdot, lambdadot) -- the
/// Hessian-block matrix of the minimized Hamiltonian. Second derivatives
/// come from central differences of the analytic first derivatives; the
/// blocks that only involve first derivatives are filled analytically when
/// the input matrix is state-independent.
class InfluenceKernel {
 public:
  InfluenceKernel(const SystemModel& model, const CostWeights& R)
      : model_(model),
        R_(R),
        n_(model.state_dim()),
        m_(model.control_dim()),
        state_dep_B_(model.input_matrix_depends_on_state()),
        J_(n_, n_),
        B_(n_, m_),
        u_(m_),
        btl_(m_),
        a_(n_),
        gp_(n_),
        gm_(n_),
        fp_(2 * n_),
        fm_(2 * n_),
        JF_(2 * n_, 2 * n_) {
    if (!state_dep_B_) {
      model.input_matrix(Vec::Zero(n_), B_);
      BRBt_ = B_ * R.R_inv() * B_.transpose();
    }
  }

  /// Fills JF at (x, lambda); the result stays valid until the next call.
  const Mat& jacobian(const Vec& x, const Vec& lambda) {
    if (state_dep_B_) {
      fd_full(x, lambda);
    } else {
      // Constant B: xdot = a(x) + B u(lambda), so three blocks are exact.
      model_.drift_jacobian(x, J_);
      JF_.topLeftCorner(n_, n_) = J_;
      JF_.topRightCorner(n_, n_) = -BRBt_;
      JF_.bottomRightCorner(n_, n_) = -J_.transpose();
      // d(-a_x' lambda)/dx by central differences of the analytic a_x.
      for (int j = 0; j < n_; ++j) {
        const double delta = 1e-5 * std::max(1.0, std::abs(x[j]));
        Vec xp = x, xm = x;
        xp[j] += delta;
        xm[j] -= delta;
        model_.drift_jacobian(xp, J_);
        gp_.noalias() = J_.transpose() * lambda;
        model_.drift_jacobian(xm, J_);
        gm_.noalias() = J_.transpose() * lambda;
        JF_.block(n_, j, n_, 1) = -(gp_ - gm_) / (2.0 * delta);
      }
    }
    return JF_;
  }

  /// out = (xdot, lambdadot) at (x, lambda) with the minimizing control.
  void field(const Vec& x, const Vec& lambda, Eigen::Ref<Vec> out) {
    model_.input_matrix(x, B_);
    btl_.noalias() = B_.transpose() * lambda;
    u_.noalias() = -(R_.R_inv() * btl_);
    model_.drift(x, a_);
    out.head(n_) = a_;
    out.head(n_).noalias() += B_ * u_;
    model_.drift_jacobian(x, J_);
    if (state_dep_B_) {
      model_.input_matrix_jacobian(x, dB_);
      for (int k = 0; k < n_; ++k)
        if (dB_[k].size() != 0 && !dB_[k].isZero(0.0)) J_.col(k) += dB_[k] * u_;
    }
    out.tail(n_).noalias() = -(J_.transpose() * lambda);
  }

 private:
  void fd_full(const Vec& x, const Vec& lambda) {
    Vec z(2 * n_);
    z.head(n_) = x;
    z.tail(n_) = lambda;
    for (int j = 0; j < 2 * n_; ++j) {
      const double delta = 1e-5 * std::max(1.0, std::abs(z[j]));
      Vec z1 = z, z2 = z;
      z1[j] += delta;
      z2[j] -= delta;
      field(z1.head(n_), z1.tail(n_), fp_);
      field(z2.head(n_), z2.tail(n_), fm_);
      JF_.col(j) = (fp_ - fm_) / (2.0 * delta);
    }
  }

  const SystemModel& model_;
  const CostWeights& R_;
  int n_, m_;
  bool state_dep_B_;
  Mat J_, B_, BRBt_;
  Vec u_, btl_, a_, gp_, gm_, fp_, fm_;
  std::vector<Mat> dB_;
  Mat JF_;
};

}  // namespace

void influence_rhs(const SystemModel& model, const Vec& x, const Vec& lambda,
                   const CostWeights& R, const Mat& P_x, const Mat& P_lambda,
                   Mat& dP_x, Mat& dP_lambda) {
  const int n = model.state_dim();
  InfluenceKernel kernel(model, R);
  const Mat& JF = kernel.jacobian(x, lambda);
  dP_x.resize(n, n);
  dP_lambda.resize(n, n);
  dP_x.noalias() = JF.topLeftCorner(n, n) * P_x;
  dP_x.noalias() += JF.topRightCorner(n, n) * P_lambda;
  dP_lambda.noalias() = JF.bottomLeftCorner(n, n) * P_x;
  dP_lambda.noalias() += JF.bottomRightCorner(n, n) * P_lambda;
}

namespace {

/// Joint BVP2 + influence-matrix right-hand side on the flattened vector
/// (x, lambda, vec P_x, vec P_lambda); one Hessian evaluation per stage,
/// shared by both P blocks.
struct JointInfluenceRhs {
  const int n;
  InfluenceKernel kernel;
  Vec x_buf, l_buf;

  JointInfluenceRhs(const SystemModel& model, const CostWeights& R)
      : n(model.state_dim()),
        kernel(model, R),
        x_buf(model.state_dim()),
        l_buf(model.state_dim()) {}

  void operator()(double, const Vec& y, Vec& dy) {
    dy.resize(y.size());
    x_buf = y.head(n);
    l_buf = y.segment(n, n);
    kernel.field(x_buf, l_buf, dy.head(2 * n));
    const Mat& JF = kernel.jacobian(x_buf, l_buf);
    const Eigen::Map<const Mat> Px(y.data() + 2 * n, n, n);
    const Eigen::Map<const Mat> Pl(y.data() + 2 * n + n * n, n, n);
    Eigen::Map<Mat> dPx(dy.data() + 2 * n, n, n);
    Eigen::Map<Mat> dPl(dy.data() + 2 * n + n * n, n, n);
    dPx.noalias() = JF.topLeftCorner(n, n) * Px;
    dPx.noalias() += JF.topRightCorner(n, n) * Pl;
    dPl.noalias() = JF.bottomLeftCorner(n, n) * Px;
    dPl.noalias() += JF.bottomRightCorner(n, n) * Pl;
  }
};

Vec joint_initial_state(const Vec& x0, const Vec& lambda0) {
  const int n = static_cast<int>(x0.size());
  Vec y0(2 * n + 2 * n * n);
  y0.head(n) = x0;
  y0.segment(n, n) = lambda0;
  Eigen::Map<Mat>(y0.data() + 2 * n, n, n) = Mat::Zero(n, n);
  Eigen::Map<Mat>(y0.data() + 2 * n + n * n, n, n) = Mat::Identity(n, n);
  return y0;
}

}  // namespace

InfluenceTable integrate_influence(const SystemModel& model, const CostWeights& R,
                                   const Vec& x0, const Vec& lambda0, double tau,
                                   double dt) {
  const int n = model.state_dim();
  const Grid grid = make_grid(tau, dt);
  JointInfluenceRhs rhs(model, R);
  const OdeTable raw = integrate(rhs, joint_initial_state(x0, lambda0), 0.0, tau,
                                 IntegratorConfig{grid.h});

  InfluenceTable table;
  table.times = raw.times;
  for (const Vec& y : raw.values) {
    table.states.push_back(y.head(n));
    table.costates.push_back(y.segment(n, n));
    table.P_x.push_back(Eigen::Map<const Mat>(y.data() + 2 * n, n, n));
    table.P_lambda.push_back(Eigen::Map<const Mat>(y.data() + 2 * n + n * n, n, n));
  }
  return table;
}

namespace {

struct VePass {
  double tau = 0.0;
  double h = 0.0;
  SampledCurve x, lambda, u;
  Vec x_end, l_end;
  Mat Px_end, Pl_end;
  double cost = kInf;
  double boundary_residual = kInf;  // relative, at t = tau
  double max_hamiltonian = kInf;
};

VePass run_ve_pass(const SystemModel& model, const CostWeights& R, const Vec& x0,
                   const Vec& x1, const Vec& lambda0, double tau, double dt,
                   OdeCounter* counter) {
  const int n = model.state_dim();
  const Grid grid = make_grid(tau, dt);
  JointInfluenceRhs rhs(model, R);
  const OdeTable raw = integrate(rhs, joint_initial_state(x0, lambda0), 0.0, tau,
                                 IntegratorConfig{grid.h}, counter);

  VePass pass;
  pass.tau = tau;
  pass.h = grid.h;
  const std::size_t count = raw.size();
  std::vector<Vec> xs(count), ls(count), us(count);
  std::vector<double> integrand(count);
  pass.max_hamiltonian = 0.0;
  const int m = model.control_dim();
  Vec B_t_l(m), a_buf(n), fx(n);
  Mat B_buf(n, m);
  for (std::size_t i = 0; i < count; ++i) {
    xs[i] = raw.values[i].head(n);
    ls[i] = raw.values[i].segment(n, n);
    model.input_matrix(xs[i], B_buf);
    B_t_l.noalias() = B_buf.transpose() * ls[i];
    us[i].noalias() = -(R.R_inv() * B_t_l);
    integrand[i] = 1.0 + R.control_cost(us[i]);
    model.drift(xs[i], a_buf);
    fx = a_buf;
    fx.noalias() += B_buf * us[i];
    const double h_val = 1.0 + R.control_cost(us[i]) + ls[i].dot(fx);
    pass.max_hamiltonian = std::max(pass.max_hamiltonian, std::abs(h_val));
  }
  pass.x_end = xs.back();
  pass.l_end = ls.back();
  pass.Px_end = Eigen::Map<const Mat>(raw.values.back().data() + 2 * n, n, n);
  pass.Pl_end =
      Eigen::Map<const Mat>(raw.values.back().data() + 2 * n + n * n, n, n);
  pass.cost = integrate_samples_uniform(grid.h, integrand);
  pass.boundary_residual = (pass.x_end - x1).norm() / (1.0 + x1.norm());
  pass.x = SampledCurve(0.0, grid.h, std::move(xs));
  pass.lambda = SampledCurve(0.0, grid.h, std::move(ls));
  pass.u = SampledCurve(0.0, grid.h, std::move(us));
  return pass;
}

/// Forward BVP2 shot without the influence matrices; used by the Newton
/// line search to price a candidate (lambda0, tau).
bool probe_residual(const SystemModel& model, const CostWeights& R, const Vec& x0,
                    const Vec& x1, const Vec& lambda0, double tau, double dt,
                    OdeCounter* counter, double& rnorm_out) {
  const int n = model.state_dim();
  const Grid grid = make_grid(tau, dt);
  InfluenceKernel kernel(model, R);
  Vec x_buf(n), l_buf(n);
  auto rhs = [&](double, const Vec& y, Vec& dy) {
    dy.resize(2 * n);
    x_buf = y.head(n);
    l_buf = y.tail(n);
    kernel.field(x_buf, l_buf, dy);
  };
  Vec y0(2 * n);
  y0.head(n) = x0;
  y0.tail(n) = lambda0;
  OdeTable raw;
  try {
    raw = integrate(rhs, y0, 0.0, tau, IntegratorConfig{grid.h}, counter);
  } catch (const IntegrationDivergedError&) {
    return false;
  }
  const Vec x_end = raw.back().head(n);
  const Vec l_end = raw.back().tail(n);
  Vec r(n + 1);
  r.head(n) = x_end - x1;
  r[n] = hamiltonian(model, x_end, l_end, R);
  if (!r.allFinite()) return false;
  rnorm_out = r.norm();
  return true;
}

TrajectorySegment segment_from_ve(const VePass& pass) {
  TrajectorySegment seg;
  const std::size_t count = pass.x.size();
  seg.times.resize(count);
  seg.states.resize(count);
  seg.costates.resize(count);
  seg.controls.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    seg.times[i] = pass.h * static_cast<double>(i);
    seg.states[i] = pass.x.sample(i);
    seg.costates[i] = pass.lambda.sample(i);
    seg.controls[i] = pass.u.sample(i);
  }
  seg.times.back() = pass.tau;
  seg.duration = pass.tau;
  seg.cost = pass.cost;
  return seg;
}

}  // namespace

namespace {

TpbvpSolution solve_ve_core(const SystemModel& model, const CostWeights& R,
                            const Vec& x0, const Vec& x1, const SolverConfig& cfg,
                            const AffineSeed* seed) {
  AffineSeed local;
  if (seed == nullptr) {
    local = initial_guess(model, x0, x1, R, cfg);
    seed = &local;
  }
  const int n = model.state_dim();

  Vec lambda0 = seed->segment.costates.front();
  double tau = std::clamp(seed->segment.duration, cfg.tau_min, cfg.tau_max);

  TpbvpSolution sol;
  VePass cur;
  bool have_cur = false;
  double rnorm_last = kInf;
  int grow_count = 0;

  for (int k = 1; k <= cfg.max_iters; ++k) {
    OdeCounter counter;
    VePass pass;
    try {
      pass = run_ve_pass(model, R, x0, x1, lambda0, tau, cfg.dt, &counter);
    } catch (const IntegrationDivergedError&) {
      sol.iterations = k;
      break;
    }

    const double change =
        have_cur ? std::max(sup_change(pass.x, cur.x),
                            sup_change(pass.lambda, cur.lambda))
                 : kInf;
    Vec r(n + 1);
    r.head(n) = pass.x_end - x1;
    r[n] = hamiltonian(model, pass.x_end, pass.l_end, R);
    const double rnorm = r.norm();

    const bool prev_existed = have_cur;
    cur = pass;
    have_cur = true;
    sol.iterations = k;

    const double h_end = r[n];
    const bool tau_pinned = (tau <= cfg.tau_min + 1e-15 && h_end > 0.0) ||
                            (tau >= cfg.tau_max - 1e-15 && h_end < 0.0);
    const bool h_ok = cfg.fix_final_time || tau_pinned ||
                      cur.max_hamiltonian <= cfg.hamiltonian_tol;
    if (prev_existed && change < cfg.boundary_tol &&
        cur.boundary_residual <= cfg.boundary_tol && h_ok) {
      sol.history.push_back({cur.tau, cur.cost, cur.boundary_residual,
                             cur.max_hamiltonian, change, counter.dims});
      sol.converged = true;
      break;
    }
    const double rnorm_floor =
        std::max(cfg.boundary_tol * (1.0 + x1.norm()), cfg.hamiltonian_tol);
    if (rnorm > 1.5 * rnorm_last && rnorm > rnorm_floor) {
      if (++grow_count >= 3) {
        sol.history.push_back({cur.tau, cur.cost, cur.boundary_residual,
                               cur.max_hamiltonian, change, counter.dims});
        break;
      }
    } else {
      grow_count = 0;
    }
    rnorm_last = std::min(rnorm_last, rnorm);

    if (k == cfg.max_iters) {
      sol.history.push_back({cur.tau, cur.cost, cur.boundary_residual,
                             cur.max_hamiltonian, change, counter.dims});
      break;
    }

    // Newton step on (lambda0, tau); tau row uses dx(tau)/dtau = f at the
    // endpoint and dH/dtau = 0 (free-time extremal).
    const Vec u_end = optimal_control(model, cur.x_end, cur.l_end, R);
    const Vec xdot_end = eval_f(model, cur.x_end, u_end);
    const Vec ldot_end =
        -f_jacobian_x(model, cur.x_end, u_end).transpose() * cur.l_end;

    Vec delta_lambda(n);
    double delta_tau = 0.0;
    bool solved = false;
    if (cfg.fix_final_time) {
      try {
        delta_lambda = solve_linear(cur.Px_end, r.head(n));
        solved = true;
      } catch (const SingularMatrixError&) {
        try {
          delta_lambda = solve_linear(
              cur.Px_end + 1e-8 * Mat::Identity(n, n), r.head(n));
          solved = true;
        } catch (const SingularMatrixError&) {
        }
      }
    } else {
      Mat Jn(n + 1, n + 1);
      Jn.topLeftCorner(n, n) = cur.Px_end;
      Jn.topRightCorner(n, 1) = xdot_end;
      Jn.bottomLeftCorner(1, n) = -ldot_end.transpose() * cur.Px_end +
                                  xdot_end.transpose() * cur.Pl_end;
      Jn(n, n) = 0.0;
      Vec delta(n + 1);
      try {
        delta = solve_linear(Jn, r);
        solved = true;
      } catch (const SingularMatrixError&) {
        try {
          delta = solve_linear(Jn + 1e-8 * Mat::Identity(n + 1, n + 1), r);
          solved = true;
        } catch (const SingularMatrixError&) {
        }
      }
      if (solved) {
        delta_lambda = delta.head(n);
        delta_tau = delta[n];
      }
    }
    if (!solved) {  // singular even after the Tikhonov shift
      sol.history.push_back({cur.tau, cur.cost, cur.boundary_residual,
                             cur.max_hamiltonian, change, counter.dims});
      break;
    }

    // Damped update: halve (up to 5 times) until the shot residual drops. A
    // negligible step is accepted after the first probe (the residual is
    // already at its floor there).
    const double step_scale =
        delta_lambda.norm() + std::abs(delta_tau);
    const double tiny_step = 1e-10 * (1.0 + lambda0.norm() + tau);
    double scale = cfg.newton_damping;
    Vec lambda0_next = lambda0 - scale * delta_lambda;
    double tau_next =
        std::clamp(tau - scale * delta_tau, cfg.tau_min, cfg.tau_max);
    for (int d = 0; d < 5; ++d) {
      double rnorm_cand = kInf;
      const bool finite = probe_residual(model, R, x0, x1, lambda0_next,
                                         tau_next, cfg.dt, &counter, rnorm_cand);
      if (finite && (rnorm_cand < rnorm || scale * step_scale <= tiny_step)) break;
      scale *= 0.5;
      lambda0_next = lambda0 - scale * delta_lambda;
      tau_next = std::clamp(tau - scale * delta_tau, cfg.tau_min, cfg.tau_max);
    }
    lambda0 = lambda0_next;
    tau = tau_next;

    sol.history.push_back({cur.tau, cur.cost, cur.boundary_residual,
                           cur.max_hamiltonian, change, counter.dims});
  }

  if (have_cur) sol.segment = segment_from_ve(cur);
  return sol;
}

/// Target-continuation fallback shared by both solvers: when the plain
/// iteration fails, walk the boundary condition toward x1 through 2, 4, ...
/// intermediate targets, seeding every stage with the previous stage's
/// solution. Convergence is judged on the final stage only.
template <class Core>
TpbvpSolution solve_with_continuation(Core&& core, const SystemModel& model,
                                      const CostWeights& R, const Vec& x0,
                                      const Vec& x1, const SolverConfig& cfg,
                                      const AffineSeed* seed) {
  AffineSeed base;
  if (seed == nullptr) {
    base = initial_guess(model, x0, x1, R, cfg);
    seed = &base;
  }
  TpbvpSolution plain = core(model, R, x0, x1, cfg, seed);
  if (plain.converged || cfg.continuation_levels <= 0) return plain;

  for (int level = 1; level <= cfg.continuation_levels; ++level) {
    const int stages = 1 << level;
    AffineSeed stage_seed = *seed;
    TpbvpSolution sol;
    sol.history = plain.history;
    sol.iterations = plain.iterations;
    bool ok = true;
    for (int s = 1; s <= stages; ++s) {
      const double alpha = static_cast<double>(s) / stages;
      const Vec target = x0 + alpha * (x1 - x0);
      TpbvpSolution stage = core(model, R, x0, target, cfg, &stage_seed);
      sol.iterations += stage.iterations;
      sol.history.insert(sol.history.end(), stage.history.begin(),
                         stage.history.end());
      if (!stage.converged || stage.segment.empty()) {
        ok = false;
        break;
      }
      stage_seed.segment = stage.segment;
      sol.segment = std::move(stage.segment);
      sol.converged = (s == stages);
    }
    if (ok && sol.converged) return sol;
  }
  return plain;
}

}  // namespace

TpbvpSolution solve_sa(const SystemModel& model, const CostWeights& R,
                       const Vec& x0, const Vec& x1, const SolverConfig& cfg,
                       const AffineSeed* seed) {
  return solve_with_continuation(solve_sa_core, model, R, x0, x1, cfg, seed);
}

TpbvpSolution solve_ve(const SystemModel& model, const CostWeights& R,
                       const Vec& x0, const Vec& x1, const SolverConfig& cfg,
                       const AffineSeed* seed) {
  return solve_with_continuation(solve_ve_core, model, R, x0, x1, cfg, seed);
}

}  // namespace kinoplan
