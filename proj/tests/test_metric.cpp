#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "kinoplan/metric.hpp"
#include "kinoplan/verify.hpp"
#include "kinoplan/world.hpp"

using namespace kinoplan;

namespace {
const AffineOcpConfig kCfg{1e-3, 50.0, true};
}

TEST_CASE("self distance at an equilibrium is at most 2 dt") {
  const Pendulum pend;
  const CostWeights R = CostWeights::identity(1);
  const Vec origin = Vec::Zero(2);
  const DistanceResult d = aqr_distance(pend, origin, origin, R, kCfg);
  CHECK(d.valid);
  CHECK(d.cost <= 2.0 * kCfg.dt);
}

TEST_CASE("aqr distance is exact on the double integrator") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  Vec x1(2);
  x1 << 1.0, 0.0;
  const DistanceResult d = aqr_distance(di, Vec::Zero(2), x1, R, kCfg);
  AffineModel m = linearize(di, x1, Vec::Zero(1), R);
  const double oracle =
      verify::transcription_optimal_cost(m, Vec::Zero(2), x1, 0.8, 4.0, 161, 96);
  CHECK(std::abs(d.cost - oracle) / oracle < 5e-3);
}

TEST_CASE("pendulum distance is asymmetric") {
  const Pendulum pend;
  const CostWeights R = CostWeights::identity(1);
  Vec down = Vec::Zero(2), up(2);
  up << M_PI, 0.0;
  const AffineOcpConfig cfg{5e-3, 80.0, true};
  const double there = aqr_distance(pend, down, up, R, cfg).cost;
  const double back = aqr_distance(pend, up, down, R, cfg).cost;
  CHECK(std::isfinite(there));
  CHECK(std::isfinite(back));
  CHECK(there != doctest::Approx(back).epsilon(1e-6));
}

TEST_CASE("sweep queries match brute force on a 10-node double-integrator tree") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  const AffineOcpConfig cfg{5e-3, 20.0, true};
  SplitMix64 rng(12345);
  std::vector<Vec> nodes;
  for (int i = 0; i < 10; ++i) {
    Vec v(2);
    v << rng.uniform(-2, 2), rng.uniform(-2, 2);
    nodes.push_back(v);
  }
  Vec q(2);
  q << 0.4, -0.3;

  std::vector<double> din(10), dout(10);
  for (int i = 0; i < 10; ++i) {
    din[i] = aqr_distance(di, nodes[i], q, R, cfg, &q).cost_grid;
    dout[i] = aqr_distance(di, q, nodes[i], R, cfg, &q).cost_grid;
  }
  const int bf_nearest = static_cast<int>(
      std::min_element(din.begin(), din.end()) - din.begin());

  MetricQueryReport report;
  CHECK(nearest(nodes, q, di, R, cfg, &report) == bf_nearest);
  for (int i = 0; i < 10; ++i)
    CHECK(report.best_cost[i] >= report.best_tau[i]);  // d_i >= tau_i
  // The winner's sweep distance matches its pairwise value (losers are only
  // scored up to the early-exit horizon).
  CHECK(report.best_cost[bf_nearest] ==
        doctest::Approx(din[bf_nearest]).epsilon(1e-9));

  const double radius = 3.0;
  std::vector<int> bf_back, bf_fwd;
  for (int i = 0; i < 10; ++i) {
    if (din[i] <= radius) bf_back.push_back(i);
    if (dout[i] <= radius) bf_fwd.push_back(i);
  }
  CHECK(near_backward(nodes, q, radius, di, R, cfg) == bf_back);
  CHECK(near_forward(nodes, q, radius, di, R, cfg) == bf_fwd);
}

TEST_CASE("sweep equivalence holds on the pendulum too") {
  const Pendulum pend;
  const CostWeights R = CostWeights::identity(1);
  const AffineOcpConfig cfg{1e-2, 20.0, true};
  SplitMix64 rng(777);
  std::vector<Vec> nodes;
  for (int i = 0; i < 8; ++i) {
    Vec v(2);
    v << rng.uniform(-2.5, 2.5), rng.uniform(-3, 3);
    nodes.push_back(v);
  }
  Vec q(2);
  q << 1.2, 0.5;

  // Pairwise oracle shares the sweep's linearization point (the query).
  std::vector<double> din(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    din[i] = aqr_distance(pend, nodes[i], q, R, cfg, &q).cost_grid;
  const int bf = static_cast<int>(std::min_element(din.begin(), din.end()) -
                                  din.begin());
  MetricQueryReport report;
  CHECK(nearest(nodes, q, pend, R, cfg, &report) == bf);
  CHECK(report.best_cost[bf] == doctest::Approx(din[bf]).epsilon(1e-6));
}

TEST_CASE("singleton tree always wins nearest") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  std::vector<Vec> nodes{Vec::Zero(2)};
  Vec q(2);
  q << 1.7, -0.4;
  CHECK(nearest(nodes, q, di, R, kCfg) == 0);
}

TEST_CASE("nearest picks the coincident equilibrium node") {
  const Pendulum pend;
  const CostWeights R = CostWeights::identity(1);
  Vec a = Vec::Zero(2), b(2), c(2);
  b << 1.0, 0.0;
  c << -0.7, 0.2;
  std::vector<Vec> nodes{b, a, c};
  MetricQueryReport report;
  CHECK(nearest(nodes, Vec::Zero(2), pend, R, kCfg, &report) == 1);
  CHECK(report.best_cost[1] <= 2.0 * kCfg.dt);
}

TEST_CASE("near radius below the grid floor yields the empty set") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  std::vector<Vec> nodes{Vec::Ones(2)};
  CHECK(near_backward(nodes, Vec::Zero(2), 0.5 * kCfg.dt, di, R, kCfg).empty());
  CHECK(near_forward(nodes, Vec::Zero(2), 0.5 * kCfg.dt, di, R, kCfg).empty());
}

TEST_CASE("generous radius admits every node whose stop rule fired") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  const AffineOcpConfig cfg{5e-3, 30.0, true};
  SplitMix64 rng(4242);
  std::vector<Vec> nodes;
  for (int i = 0; i < 6; ++i) {
    Vec v(2);
    v << rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5);
    nodes.push_back(v);
  }
  const Vec q = Vec::Zero(2);
  const auto all = near_backward(nodes, q, 25.0, di, R, cfg);
  CHECK(all.size() == nodes.size());
}

TEST_CASE("steer returns the sample when within eta") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  Vec target(2);
  target << 0.3, 0.1;
  const auto result = steer(di, Vec::Zero(2), target, 10.0, R, kCfg);
  REQUIRE(result.has_value());
  CHECK(result->reached_target);
  CHECK((result->x_new - target).norm() == 0.0);
  CHECK((result->segment.states.back() - target).norm() < 1e-10);
}

TEST_CASE("steer truncates a distant sample at running cost eta") {
  const DoubleIntegrator di;
  const CostWeights R = CostWeights::identity(1);
  Vec target(2);
  target << 4.0, 0.0;
  const double eta = 1.0;
  const auto result = steer(di, Vec::Zero(2), target, eta, R, kCfg);
  REQUIRE(result.has_value());
  CHECK_FALSE(result->reached_target);
  CHECK((result->x_new - target).norm() > 0.5);
  // Truncated segment cost within one grid step of the integrand around eta.
  const std::size_t last = result->segment.size() - 1;
  const double tail = 1.0 + R.control_cost(result->segment.controls[last]);
  const double h = result->segment.times[1] - result->segment.times[0];
  CHECK(result->segment.cost >= eta - 1e-9);
  CHECK(result->segment.cost <= eta + h * tail + 1e-9);
  // Quadrature of the truncated segment agrees with the stored cost.
  const double quad = segment_quadrature_cost(result->segment, R);
  CHECK(quad == doctest::Approx(result->segment.cost).epsilon(1e-3));
}

TEST_CASE("steer onto itself at an equilibrium degenerates gracefully") {
  const Pendulum pend;
  const CostWeights R = CostWeights::identity(1);
  const Vec x = Vec::Zero(2);
  const auto result = steer(pend, x, x, 1.0, R, kCfg);
  REQUIRE(result.has_value());
  CHECK(result->reached_target);
  CHECK((result->x_new - x).norm() == 0.0);
  CHECK(result->segment.duration <= 2.0 * kCfg.dt);
}

TEST_CASE("steer fails cleanly when the target is unreachable") {
  // Unactuated second coordinate with zero drift: targets off the
  // reachable line never connect.
  Mat A = Mat::Zero(2, 2);
  Mat B = Mat::Zero(2, 1);
  B(0, 0) = 1.0;
  const LinearSystem sys(A, B, Vec::Zero(2));
  const CostWeights R = CostWeights::identity(1);
  Vec target(2);
  target << 0.3, 1.0;
  const AffineOcpConfig cfg{1e-2, 2.0, true};
  CHECK_FALSE(steer(sys, Vec::Zero(2), target, 1.0, R, cfg).has_value());
}
