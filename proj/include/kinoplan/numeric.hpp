#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinoplan {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct IntegratorConfig {
  double dt = 1e-3;
};

/// Tallies how many scalar first-order ODEs were handed to integrate().
/// Each call adds dim(y) once, independent of the number of steps taken,
/// which is the bookkeeping the solver complexity tests assert on.
struct OdeCounter {
  long long dims = 0;
  long long calls = 0;
  void record(Eigen::Index n) {
    dims += static_cast<long long>(n);
    ++calls;
  }
};

class IntegrationDivergedError : public std::runtime_error {
 public:
  explicit IntegrationDivergedError(double t)
      : std::runtime_error("ODE integration produced a non-finite value at t=" +
                           std::to_string(t)),
        time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class SingularMatrixError : public std::runtime_error {
 public:
  SingularMatrixError()
      : std::runtime_error("matrix is singular to working precision") {}
};

/// Time-indexed solution samples, times strictly monotone (decreasing when
/// integrating backward).
struct OdeTable {
  std::vector<double> times;
  std::vector<Vec> values;

  const Vec& front() const { return values.front(); }
  const Vec& back() const { return values.back(); }
  std::size_t size() const { return times.size(); }
};

namespace detail {

struct Rk4Work {
  Vec k1, k2, k3, k4, ytmp;
  void resize(Eigen::Index n) {
    if (k1.size() == n) return;
    k1.resize(n);
    k2.resize(n);
    k3.resize(n);
    k4.resize(n);
    ytmp.resize(n);
  }
};

}  // namespace detail

/// One classical RK4 step of size h (h may be negative).
/// rhs must be callable as rhs(t, y, dy) writing dy in place.
template <class Rhs>
void rk4_step(Rhs&& rhs, double t, double h, const Vec& y, Vec& out,
              detail::Rk4Work& w) {
  w.resize(y.size());
  rhs(t, y, w.k1);
  w.ytmp = y + (0.5 * h) * w.k1;
  rhs(t + 0.5 * h, w.ytmp, w.k2);
  w.ytmp = y + (0.5 * h) * w.k2;
  rhs(t + 0.5 * h, w.ytmp, w.k3);
  w.ytmp = y + h * w.k3;
  rhs(t + h, w.ytmp, w.k4);
  out = y + (h / 6.0) * (w.k1 + 2.0 * w.k2 + 2.0 * w.k3 + w.k4);
}

/// Fixed-step RK4 from t0 to t1 (either order; backward runs negate the
/// step). Samples at t0, t0 +/- dt, ..., t1; the final step is shortened so
/// the last sample lands exactly on t1. Throws IntegrationDivergedError on
/// the first non-finite state.
template <class Rhs>
OdeTable integrate(Rhs&& rhs, const Vec& y0, double t0, double t1,
                   const IntegratorConfig& cfg, OdeCounter* counter = nullptr) {
  if (!(cfg.dt > 0.0)) throw std::invalid_argument("integrate: dt must be > 0");
  if (!y0.allFinite()) throw IntegrationDivergedError(t0);
  if (counter) counter->record(y0.size());

  OdeTable table;
  const double span = t1 - t0;
  const double adt = cfg.dt;
  const double aspan = std::abs(span);

  long long nfull = static_cast<long long>(aspan / adt + 1e-9);
  while (nfull > 0 && static_cast<double>(nfull) * adt > aspan * (1.0 + 1e-12))
    --nfull;
  const double rem = aspan - static_cast<double>(nfull) * adt;
  const bool partial = rem > 1e-12 * std::max(1.0, aspan);
  const long long nsteps = nfull + (partial ? 1 : 0);

  table.times.reserve(static_cast<std::size_t>(nsteps) + 1);
  table.values.reserve(static_cast<std::size_t>(nsteps) + 1);
  table.times.push_back(t0);
  table.values.push_back(y0);
  if (nsteps == 0) return table;

  const double dir = span < 0 ? -1.0 : 1.0;
  detail::Rk4Work w;
  Vec y = y0;
  Vec ynext(y0.size());
  double t = t0;
  for (long long k = 1; k <= nsteps; ++k) {
    const double tk = (k == nsteps) ? t1 : t0 + dir * adt * static_cast<double>(k);
    const double h = tk - t;
    rk4_step(rhs, t, h, y, ynext, w);
    if (!ynext.allFinite()) throw IntegrationDivergedError(tk);
    y.swap(ynext);
    t = tk;
    table.times.push_back(t);
    table.values.push_back(y);
  }
  return table;
}

/// Solves Mx = b by pivoted LU. Throws SingularMatrixError when M is
/// singular to working precision; dimension mismatches throw
/// std::invalid_argument.
Vec solve_linear(const Mat& M, const Vec& b);

/// Packs the lower triangle of a symmetric n x n matrix into a vector of
/// length n(n+1)/2, column-major over the triangle.
Vec sym_to_vech(const Mat& S);
Mat vech_to_sym(const Vec& v, int n);
inline int vech_size(int n) { return n * (n + 1) / 2; }

/// Uniform-grid samples with linear interpolation, clamped at both ends.
class SampledCurve {
 public:
  SampledCurve() = default;
  SampledCurve(double t0, double h, std::vector<Vec> samples);

  const Vec& sample(std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  double t_begin() const { return t0_; }
  double t_end() const { return t0_ + h_ * static_cast<double>(samples_.size() - 1); }
  double step() const { return h_; }
  bool empty() const { return samples_.empty(); }

  Vec eval(double t) const;
  void eval_into(double t, Vec& out) const;

 private:
  double t0_ = 0.0;
  double h_ = 1.0;
  std::vector<Vec> samples_;
};

/// Integral of uniformly sampled scalar values with step h: composite
/// Simpson when the interval count is even, Simpson plus a 3/8 tail when
/// odd (>= 3 intervals), trapezoid for the degenerate short cases.
double integrate_samples_uniform(double h, const std::vector<double>& f);

/// Integral of scalar samples on a piecewise-uniform grid: splits the grid
/// into maximal uniform runs and applies integrate_samples_uniform per run.
double integrate_samples(const std::vector<double>& t, const std::vector<double>& f);

}  // namespace kinoplan
