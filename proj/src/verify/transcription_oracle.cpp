#include <cmath>

#include "kinoplan/verify.hpp"

namespace kinoplan::verify {

namespace {

/// Exact one-interval discretization (Phi, Gamma, delta) of
/// xdot = Ax + Bu + c with constant u: integrates the augmented matrix ODE
/// M' = A M + [0 | B | c] with a local fixed-step RK4 (own stepper; the
/// oracle must not lean on the code it checks).
void discretize(const Mat& A, const Mat& B, const Vec& c, double h, Mat& Phi,
                Mat& Gamma, Vec& delta) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(B.cols());
  Mat M(n, n + m + 1);
  M.leftCols(n) = Mat::Identity(n, n);
  M.middleCols(n, m).setZero();
  M.rightCols(1).setZero();

  Mat F(n, n + m + 1);
  F.leftCols(n).setZero();
  F.middleCols(n, m) = B;
  F.rightCols(1) = c;

  const int substeps = 64;
  const double hh = h / substeps;
  Mat k1, k2, k3, k4;
  for (int s = 0; s < substeps; ++s) {
    k1 = A * M + F;
    k2 = A * (M + 0.5 * hh * k1) + F;
    k3 = A * (M + 0.5 * hh * k2) + F;
    k4 = A * (M + hh * k3) + F;
    M += (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  Phi = M.leftCols(n);
  Gamma = M.middleCols(n, m);
  delta = M.rightCols(1);
}

}  // namespace

double transcription_cost_at(const AffineModel& model, const Vec& x0,
                             const Vec& x1, double tau, int control_intervals) {
  const int n = model.n();
  const int m = model.m();
  const int N = control_intervals;
  const double h = tau / N;

  Mat Phi, Gamma;
  Vec delta;
  discretize(model.A, model.B, model.c, h, Phi, Gamma, delta);

  // Endpoint map x_N = Phi^N x0 + sum_k Phi^{N-1-k} (Gamma u_k + delta);
  // constraint W u = d with W column blocks Phi^{N-1-k} Gamma.
  Mat W(n, N * m);
  Vec drift = Vec::Zero(n);
  Mat P = Mat::Identity(n, n);  // Phi^{N-1-k}, built from the tail
  for (int k = N - 1; k >= 0; --k) {
    W.middleCols(k * m, m) = P * Gamma;
    drift += P * delta;
    P = P * Phi;
  }
  const Vec d = x1 - P * x0 - drift;  // P is now Phi^N

  // Minimize (h/2) sum u_k' R u_k subject to W u = d:
  // J = (h/2) d' (W Q W')^{-1} d with Q = blockdiag(R^{-1}).
  Mat WQWt = Mat::Zero(n, n);
  for (int k = 0; k < N; ++k) {
    const Mat Wk = W.middleCols(k * m, m);
    WQWt += Wk * model.R.R_inv() * Wk.transpose();
  }
  const Eigen::LDLT<Mat> ldlt(WQWt);
  if (ldlt.info() != Eigen::Success)
    return std::numeric_limits<double>::infinity();
  const Vec y = ldlt.solve(d);
  if ((WQWt * y - d).norm() > 1e-6 * std::max(1.0, d.norm()))
    return std::numeric_limits<double>::infinity();
  return tau + 0.5 * h * d.dot(y);
}

double transcription_optimal_cost(const AffineModel& model, const Vec& x0,
                                  const Vec& x1, double tau_lo, double tau_hi,
                                  int tau_samples, int control_intervals) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < tau_samples; ++i) {
    const double tau =
        tau_lo + (tau_hi - tau_lo) * static_cast<double>(i) /
                     static_cast<double>(tau_samples - 1);
    if (!(tau > 0.0)) continue;
    best = std::min(best,
                    transcription_cost_at(model, x0, x1, tau, control_intervals));
  }
  return best;
}

}  // namespace kinoplan::verify
