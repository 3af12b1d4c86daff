#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kinoplan/dynamics.hpp"
#include "kinoplan/world.hpp"

using namespace kinoplan;

namespace {

Vec random_state(const SystemModel& model, SplitMix64& rng, double scale = 1.5) {
  Vec x(model.state_dim());
  for (int i = 0; i < x.size(); ++i) x[i] = rng.uniform(-scale, scale);
  return x;
}

Vec random_control(const SystemModel& model, SplitMix64& rng, double scale = 1.5) {
  Vec u(model.control_dim());
  for (int i = 0; i < u.size(); ++i) u[i] = rng.uniform(-scale, scale);
  return u;
}

// Central finite difference of f wrt x against the analytic Jacobian.
double jacobian_fd_error(const SystemModel& model, const Vec& x, const Vec& u) {
  const Mat J = f_jacobian_x(model, x, u);
  const int n = model.state_dim();
  Mat Jfd(n, n);
  for (int k = 0; k < n; ++k) {
    const double step = 1e-5 * std::max(1.0, std::abs(x[k]));
    Vec xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    Jfd.col(k) = (eval_f(model, xp, u) - eval_f(model, xm, u)) / (2.0 * step);
  }
  return (J - Jfd).lpNorm<Eigen::Infinity>() /
         std::max(1.0, J.lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST_CASE("eval_f basics") {
  const Pendulum pend;
  Vec x = Vec::Zero(2), u = Vec::Zero(1);
  CHECK(eval_f(pend, x, u).norm() == 0.0);  // downward equilibrium

  const DoubleIntegrator di;
  u << 1.0;
  const Vec f = eval_f(di, Vec::Zero(2), u);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 1.0);

  const DiffDrive dd;
  Vec xd(5), ud = Vec::Zero(2);
  xd << 0, 0, 0, 1, 0;
  const Vec fd = eval_f(dd, xd, ud);
  Vec expect(5);
  expect << 1, 0, 0, 0, 0;
  CHECK((fd - expect).norm() == 0.0);

  CHECK_THROWS_AS(eval_f(dd, Vec::Zero(3), ud), std::invalid_argument);
}

TEST_CASE("linearize double integrator is exact") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  SplitMix64 rng(3);
  const Vec x_hat = random_state(di, rng);
  const AffineModel a = linearize(di, x_hat, Vec::Zero(1), R);
  Mat A(2, 2);
  A << 0, 1, 0, 0;
  CHECK((a.A - A).norm() == 0.0);
  CHECK(a.B(0, 0) == 0.0);
  CHECK(a.B(1, 0) == 1.0);
  CHECK(a.c.norm() == 0.0);
}

TEST_CASE("linearize pendulum at origin and at pi/2") {
  PendulumParams p;  // defaults: m=1, lc=0.5, I=0.25, b=0.1, g=9.8
  const Pendulum pend(p);
  const CostWeights R = CostWeights::identity(1);
  const double k = p.mass * p.gravity * p.length_com / p.inertia;  // 19.6

  const AffineModel at0 = linearize(pend, Vec::Zero(2), Vec::Zero(1), R);
  CHECK(at0.A(1, 0) == doctest::Approx(-k));
  CHECK(at0.A(1, 1) == doctest::Approx(-p.damping / p.inertia));
  CHECK(at0.B(1, 0) == doctest::Approx(1.0 / p.inertia));
  CHECK(at0.c.norm() < 1e-14);

  Vec x_hat(2);
  x_hat << M_PI / 2.0, 0.0;
  const AffineModel at90 = linearize(pend, x_hat, Vec::Zero(1), R);
  // c = f(x_hat, 0) - A x_hat: second entry -k (sin(pi/2) - (pi/2) cos(pi/2)).
  const double expected_c2 =
      -k * (std::sin(M_PI / 2) - (M_PI / 2) * std::cos(M_PI / 2));
  CHECK(at90.c[1] == doctest::Approx(expected_c2));
  const Vec recon = eval_f(pend, x_hat, Vec::Zero(1)) - at90.A * x_hat;
  CHECK((at90.c - recon).norm() < 1e-12);
}

TEST_CASE("split residual identity f = Ax + Bu + g") {
  SplitMix64 rng(17);
  const CostWeights R1 = CostWeights::identity(1);
  const CostWeights R2 = CostWeights::identity(2);
  const CostWeights R3 = CostWeights::identity(3);

  const Pendulum pend;
  const DiffDrive dd;
  const Scara scara;
  const std::vector<std::pair<const SystemModel*, const CostWeights*>> cases = {
      {&pend, &R1}, {&dd, &R2}, {&scara, &R3}};

  for (const auto& [model, R] : cases) {
    const Vec x_hat = random_state(*model, rng);
    const AffineModel affine = linearize(*model, x_hat, Vec::Zero(model->control_dim()), *R);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec x = random_state(*model, rng);
      const Vec u = random_control(*model, rng);
      const Vec g = residual_g(*model, x, u, affine);
      const Vec lhs = eval_f(*model, x, u);
      const Vec rhs = affine.A * x + affine.B * u + g;
      CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }

  // Linear system: g vanishes identically.
  Mat A(2, 2);
  A << 0.3, -1.0, 0.7, 0.2;
  const LinearSystem lin(A, Mat::Identity(2, 2), Vec::Zero(2));
  const AffineModel affine = linearize(lin, random_state(lin, rng), Vec::Zero(2), R2);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec x = random_state(lin, rng);
    const Vec u = random_control(lin, rng);
    CHECK(residual_g(lin, x, u, affine).norm() < 1e-13);
    CHECK(residual_g_x(lin, x, u, affine).norm() < 1e-13);
    CHECK(residual_g_u(lin, x, affine).norm() < 1e-13);
  }
}

TEST_CASE("pendulum residual at pi with origin linearization") {
  PendulumParams p;
  const Pendulum pend(p);
  const CostWeights R = CostWeights::identity(1);
  const AffineModel affine = linearize(pend, Vec::Zero(2), Vec::Zero(1), R);
  Vec x(2);
  x << M_PI, 0.0;
  const Vec g = residual_g(pend, x, Vec::Zero(1), affine);
  const double k = p.mass * p.gravity * p.length_com / p.inertia;
  CHECK(g[0] == doctest::Approx(0.0));
  CHECK(g[1] == doctest::Approx(k * M_PI));  // -k (sin(pi) - pi) = k pi
}

TEST_CASE("jacobians match finite differences at random states") {
  SplitMix64 rng(41);
  const Pendulum pend;
  const DiffDrive dd;
  const Scara scara;
  const DoubleIntegrator di;
  const std::vector<const SystemModel*> models = {&pend, &dd, &scara, &di};
  for (const SystemModel* model : models) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Vec x = random_state(*model, rng);
      const Vec u = random_control(*model, rng);
      worst = std::max(worst, jacobian_fd_error(*model, x, u));
    }
    INFO(model->name());
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("control affinity holds exactly") {
  SplitMix64 rng(55);
  const Scara scara;
  for (int trial = 0; trial < 30; ++trial) {
    const Vec x = random_state(scara, rng);
    const Vec u1 = random_control(scara, rng);
    const Vec u2 = random_control(scara, rng);
    const double a = rng.next_double();
    const Vec lhs = eval_f(scara, x, a * u1 + (1.0 - a) * u2);
    const Vec rhs = a * eval_f(scara, x, u1) + (1.0 - a) * eval_f(scara, x, u2);
    CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("scara mass matrix skew symmetry of Mdot - 2C") {
  const Scara scara;
  SplitMix64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const double th2 = rng.uniform(-M_PI, M_PI);
    const double w1 = rng.uniform(-2.0, 2.0);
    const double w2 = rng.uniform(-2.0, 2.0);
    // Mdot = dM/dth2 * w2 along the flow.
    const double eps = 1e-7;
    const Mat Mdot = (scara.mass_matrix(th2 + eps * w2) - scara.mass_matrix(th2 - eps * w2)) /
                     (2.0 * eps);
    const Mat S = Mdot - 2.0 * scara.coriolis_matrix(th2, w1, w2);
    const Mat sym = 0.5 * (S + S.transpose());
    CHECK(sym.lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("scara alpha beta gamma from primitives") {
  ScaraParams p;
  CHECK(p.alpha() == doctest::Approx(p.Iz1 + p.r1 * p.r1 * p.m1 +
                                     p.l1 * p.l1 * p.m2 + p.l1 * p.l1 * p.m3));
  CHECK(p.beta() == doctest::Approx(p.Iz2 + p.Iz3 + p.l2 * p.l2 * p.m3 +
                                    p.m2 * p.r2 * p.r2));
  CHECK(p.gamma_scara() == doctest::Approx(p.l1 * p.l2 * p.m3 + p.l1 * p.m2 * p.r2));
}

TEST_CASE("optimal control and hamiltonian") {
  const DoubleIntegrator di;
  const CostWeights R1 = CostWeights::identity(1);

  CHECK(optimal_control(di, Vec::Zero(2), Vec::Zero(2), R1).norm() == 0.0);

  Vec lambda(2);
  lambda << 0.0, 2.0;
  CHECK(optimal_control(di, Vec::Zero(2), lambda, R1)[0] == doctest::Approx(-2.0));

  const DiffDrive dd;
  const CostWeights R20 = CostWeights::identity(2, 20.0);
  Vec ld(5);
  ld << 0, 0, 0, 1, 1;
  const Vec u = optimal_control(dd, Vec::Zero(5), ld, R20);
  CHECK(u[0] == doctest::Approx(-0.1));
  CHECK(u[1] == doctest::Approx(0.0));

  // lambda = 0 -> H = 1 for any state.
  SplitMix64 rng(6);
  Vec x(2);
  x << rng.uniform(-1, 1), rng.uniform(-1, 1);
  CHECK(hamiltonian(di, x, Vec::Zero(2), R1) == doctest::Approx(1.0));

  Vec x2(2), l2(2);
  x2 << 0.0, 1.0;
  l2 << 1.0, 0.0;
  CHECK(hamiltonian(di, x2, l2, R1) == doctest::Approx(2.0));
}

TEST_CASE("optimal control minimizes the hamiltonian") {
  const Pendulum pend;
  const CostWeights R = CostWeights::identity(1);
  SplitMix64 rng(91);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = random_state(pend, rng);
    Vec lambda(2);
    lambda << rng.uniform(-2, 2), rng.uniform(-2, 2);
    const Vec u_star = optimal_control(pend, x, lambda, R);
    const double h_star =
        1.0 + R.control_cost(u_star) + lambda.dot(eval_f(pend, x, u_star));
    Vec u = u_star;
    u[0] += rng.uniform(-1.0, 1.0);
    const double h = 1.0 + R.control_cost(u) + lambda.dot(eval_f(pend, x, u));
    CHECK(h_star <= h + 1e-12);
  }
}

TEST_CASE("make_system factory") {
  const auto pend = make_system("pendulum", {{"mass", 2.0}, {"damping", 0.0}});
  CHECK(pend->state_dim() == 2);
  CHECK(static_cast<const Pendulum*>(pend.get())->params().mass == 2.0);
  // inertia defaults to m lc^2 when not given
  CHECK(static_cast<const Pendulum*>(pend.get())->params().inertia ==
        doctest::Approx(2.0 * 0.25));
  CHECK_THROWS_AS(make_system("warp_drive"), std::invalid_argument);
  CHECK_THROWS_AS(make_system("pendulum", {{"bogus", 1.0}}), std::invalid_argument);
}
