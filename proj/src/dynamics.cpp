#include "kinoplan/dynamics.hpp"

#include <cmath>

namespace kinoplan {

const std::vector<int> SystemModel::kNoAngles{};

const std::vector<int>& SystemModel::angle_coordinates() const { return kNoAngles; }

CostWeights::CostWeights(Mat R) : R_(std::move(R)) {
  if (R_.rows() != R_.cols())
    throw std::invalid_argument("CostWeights: R must be square");
  if (!R_.isApprox(R_.transpose(), 1e-12))
    throw std::invalid_argument("CostWeights: R must be symmetric");
  Eigen::LLT<Mat> llt(R_);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("CostWeights: R must be positive definite");
  R_inv_ = llt.solve(Mat::Identity(R_.rows(), R_.cols()));
}

CostWeights CostWeights::identity(int m, double scale) {
  return CostWeights(scale * Mat::Identity(m, m));
}

CostWeights CostWeights::diagonal(const Vec& d) {
  return CostWeights(Mat(d.asDiagonal()));
}

Vec eval_f(const SystemModel& model, const Vec& x, const Vec& u) {
  if (x.size() != model.state_dim() || u.size() != model.control_dim())
    throw std::invalid_argument("eval_f: dimension mismatch");
  Vec a(model.state_dim());
  model.drift(x, a);
  Mat B(model.state_dim(), model.control_dim());
  model.input_matrix(x, B);
  return a + B * u;
}

Mat f_jacobian_x(const SystemModel& model, const Vec& x, const Vec& u) {
  const int n = model.state_dim();
  Mat J(n, n);
  model.drift_jacobian(x, J);
  if (model.input_matrix_depends_on_state()) {
    std::vector<Mat> dB;
    model.input_matrix_jacobian(x, dB);
    for (int k = 0; k < n; ++k) {
      if (dB[k].size() != 0 && !dB[k].isZero(0.0)) J.col(k) += dB[k] * u;
    }
  }
  return J;
}

AffineModel linearize(const SystemModel& model, const Vec& x_hat, const Vec& u_hat,
                      const CostWeights& R) {
  AffineModel out;
  out.A = f_jacobian_x(model, x_hat, u_hat);
  out.B.resize(model.state_dim(), model.control_dim());
  model.input_matrix(x_hat, out.B);
  out.c = eval_f(model, x_hat, u_hat) - out.A * x_hat - out.B * u_hat;
  out.R = R;
  return out;
}

Vec residual_g(const SystemModel& model, const Vec& x, const Vec& u,
               const AffineModel& affine) {
  return eval_f(model, x, u) - affine.A * x - affine.B * u;
}

Mat residual_g_x(const SystemModel& model, const Vec& x, const Vec& u,
                 const AffineModel& affine) {
  return f_jacobian_x(model, x, u) - affine.A;
}

Mat residual_g_u(const SystemModel& model, const Vec& x, const AffineModel& affine) {
  Mat B(model.state_dim(), model.control_dim());
  model.input_matrix(x, B);
  return B - affine.B;
}

Vec optimal_control(const SystemModel& model, const Vec& x, const Vec& lambda,
                    const CostWeights& R) {
  Mat B(model.state_dim(), model.control_dim());
  model.input_matrix(x, B);
  return -R.R_inv() * (B.transpose() * lambda);
}

double hamiltonian(const SystemModel& model, const Vec& x, const Vec& lambda,
                   const CostWeights& R) {
  const Vec u = optimal_control(model, x, lambda, R);
  return 1.0 + R.control_cost(u) + lambda.dot(eval_f(model, x, u));
}

// ---------------------------------------------------------------------------
// Double integrator
// ---------------------------------------------------------------------------

void DoubleIntegrator::drift(const Vec& x, Vec& a) const {
  a.resize(2);
  a << x[1], 0.0;
}

void DoubleIntegrator::input_matrix(const Vec&, Mat& B) const {
  B.resize(2, 1);
  B << 0.0, 1.0;
}

void DoubleIntegrator::drift_jacobian(const Vec&, Mat& J) const {
  J.setZero(2, 2);
  J(0, 1) = 1.0;
}

void DoubleIntegrator::input_matrix_jacobian(const Vec&, std::vector<Mat>& dB) const {
  dB.assign(2, Mat::Zero(2, 1));
}

void DoubleIntegrator::default_bounds(Vec& lower, Vec& upper) const {
  lower.resize(2);
  upper.resize(2);
  lower << -5.0, -5.0;
  upper << 5.0, 5.0;
}

// ---------------------------------------------------------------------------
// Linear system wrapper
// ---------------------------------------------------------------------------

LinearSystem::LinearSystem(Mat A, Mat B, Vec c)
    : A_(std::move(A)), B_(std::move(B)), c_(std::move(c)) {
  if (A_.rows() != A_.cols() || A_.rows() != B_.rows() || A_.rows() != c_.size())
    throw std::invalid_argument("LinearSystem: inconsistent dimensions");
}

void LinearSystem::drift(const Vec& x, Vec& a) const { a = A_ * x + c_; }

void LinearSystem::input_matrix(const Vec&, Mat& B) const { B = B_; }

void LinearSystem::drift_jacobian(const Vec&, Mat& J) const { J = A_; }

void LinearSystem::input_matrix_jacobian(const Vec&, std::vector<Mat>& dB) const {
  dB.assign(static_cast<std::size_t>(A_.rows()), Mat::Zero(A_.rows(), B_.cols()));
}

void LinearSystem::default_bounds(Vec& lower, Vec& upper) const {
  lower = Vec::Constant(A_.rows(), -5.0);
  upper = Vec::Constant(A_.rows(), 5.0);
}

// ---------------------------------------------------------------------------
// Pendulum
// ---------------------------------------------------------------------------

Pendulum::Pendulum(PendulumParams p) : params_(p) {
  if (!(params_.inertia > 0.0) || !(params_.mass > 0.0) ||
      !(params_.length_com > 0.0) || params_.damping < 0.0)
    throw std::invalid_argument("Pendulum: invalid physical parameters");
}

void Pendulum::drift(const Vec& x, Vec& a) const {
  const auto& p = params_;
  a.resize(2);
  a[0] = x[1];
  a[1] = -(p.damping * x[1] + p.mass * p.gravity * p.length_com * std::sin(x[0])) /
         p.inertia;
}

void Pendulum::input_matrix(const Vec&, Mat& B) const {
  B.resize(2, 1);
  B << 0.0, 1.0 / params_.inertia;
}

void Pendulum::drift_jacobian(const Vec& x, Mat& J) const {
  const auto& p = params_;
  J.resize(2, 2);
  J << 0.0, 1.0,
      -p.mass * p.gravity * p.length_com * std::cos(x[0]) / p.inertia,
      -p.damping / p.inertia;
}

void Pendulum::input_matrix_jacobian(const Vec&, std::vector<Mat>& dB) const {
  dB.assign(2, Mat::Zero(2, 1));
}

const std::vector<int>& Pendulum::angle_coordinates() const {
  static const std::vector<int> kAngles{0};
  return kAngles;
}

void Pendulum::default_bounds(Vec& lower, Vec& upper) const {
  lower.resize(2);
  upper.resize(2);
  lower << -3.6, -8.0;
  upper << 3.6, 8.0;
}

// ---------------------------------------------------------------------------
// Differential-drive robot
// ---------------------------------------------------------------------------

void DiffDrive::drift(const Vec& x, Vec& a) const {
  const double th = x[2], v = x[3], w = x[4];
  a.resize(5);
  a << v * std::cos(th), v * std::sin(th), w, 0.0, 0.0;
}

void DiffDrive::input_matrix(const Vec&, Mat& B) const {
  B.setZero(5, 2);
  B(3, 0) = 1.0;
  B(3, 1) = 1.0;
  B(4, 0) = 1.0;
  B(4, 1) = -1.0;
}

void DiffDrive::drift_jacobian(const Vec& x, Mat& J) const {
  const double th = x[2], v = x[3];
  J.setZero(5, 5);
  J(0, 2) = -v * std::sin(th);
  J(0, 3) = std::cos(th);
  J(1, 2) = v * std::cos(th);
  J(1, 3) = std::sin(th);
  J(2, 4) = 1.0;
}

void DiffDrive::input_matrix_jacobian(const Vec&, std::vector<Mat>& dB) const {
  dB.assign(5, Mat::Zero(5, 2));
}

const std::vector<int>& DiffDrive::angle_coordinates() const {
  static const std::vector<int> kAngles{2};
  return kAngles;
}

void DiffDrive::default_bounds(Vec& lower, Vec& upper) const {
  lower.resize(5);
  upper.resize(5);
  lower << 0.0, 0.0, -M_PI, -2.0, -2.0;
  upper << 25.0, 11.0, M_PI, 2.0, 2.0;
}

// ---------------------------------------------------------------------------
// SCARA arm
// ---------------------------------------------------------------------------

Scara::Scara(ScaraParams p) : params_(p) {
  if (!(p.m1 > 0.0) || !(p.m2 > 0.0) || !(p.m3 > 0.0) || !(p.l1 > 0.0) ||
      !(p.l2 > 0.0))
    throw std::invalid_argument("Scara: invalid physical parameters");
}

Mat Scara::mass_matrix(double th2) const {
  const auto& p = params_;
  const double a = p.alpha(), b = p.beta(), g = p.gamma_scara();
  const double c2 = std::cos(th2);
  Mat M(3, 3);
  M << a + b + 2.0 * g * c2, b + g * c2, 0.0,
       b + g * c2, b, 0.0,
       0.0, 0.0, p.m3;
  return M;
}

Mat Scara::coriolis_matrix(double th2, double w1, double w2) const {
  const double g = params_.gamma_scara();
  const double s2 = std::sin(th2);
  Mat C = Mat::Zero(3, 3);
  C(0, 0) = -g * s2 * w2;
  C(0, 1) = -g * s2 * (w1 + w2);
  C(1, 0) = g * s2 * w1;
  return C;
}

Mat Scara::mass_matrix_d_th2(double th2) const {
  const double g = params_.gamma_scara();
  const double s2 = std::sin(th2);
  Mat dM = Mat::Zero(3, 3);
  dM(0, 0) = -2.0 * g * s2;
  dM(0, 1) = -g * s2;
  dM(1, 0) = -g * s2;
  return dM;
}

Vec Scara::bias_force(double th2, double w1, double w2) const {
  const double g = params_.gamma_scara();
  const double s2 = std::sin(th2);
  Vec h(3);
  h[0] = g * s2 * (2.0 * w1 * w2 + w2 * w2);
  h[1] = -g * s2 * w1 * w1;
  h[2] = -params_.m3 * params_.gravity;
  return h;
}

void Scara::drift(const Vec& x, Vec& a) const {
  const double th2 = x[1], w1 = x[3], w2 = x[4];
  const Mat M = mass_matrix(th2);
  const Vec h = bias_force(th2, w1, w2);
  a.resize(6);
  a.head<3>() = x.segment<3>(3);
  a.tail<3>() = M.ldlt().solve(h);
}

void Scara::input_matrix(const Vec& x, Mat& B) const {
  const Mat M = mass_matrix(x[1]);
  B.setZero(6, 3);
  B.bottomRows<3>() = M.ldlt().solve(Mat::Identity(3, 3));
}

void Scara::drift_jacobian(const Vec& x, Mat& J) const {
  const double th2 = x[1], w1 = x[3], w2 = x[4];
  const double gam = params_.gamma_scara();
  const double s2 = std::sin(th2), c2 = std::cos(th2);

  const Mat M = mass_matrix(th2);
  const auto Mldlt = M.ldlt();
  const Vec h = bias_force(th2, w1, w2);
  const Vec Minv_h = Mldlt.solve(h);

  Vec dh_dth2(3), dh_dw1(3), dh_dw2(3);
  dh_dth2 << gam * c2 * (2.0 * w1 * w2 + w2 * w2), -gam * c2 * w1 * w1, 0.0;
  dh_dw1 << 2.0 * gam * s2 * w2, -2.0 * gam * s2 * w1, 0.0;
  dh_dw2 << 2.0 * gam * s2 * (w1 + w2), 0.0, 0.0;

  J.setZero(6, 6);
  J.block<3, 3>(0, 3).setIdentity();
  // d(M^-1 h)/d th2 = M^-1 (dh/dth2 - dM/dth2 * M^-1 h)
  J.block<3, 1>(3, 1) = Mldlt.solve(dh_dth2 - mass_matrix_d_th2(th2) * Minv_h);
  J.block<3, 1>(3, 3) = Mldlt.solve(dh_dw1);
  J.block<3, 1>(3, 4) = Mldlt.solve(dh_dw2);
}

void Scara::input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const {
  dB.assign(6, Mat::Zero(6, 3));
  const double th2 = x[1];
  const Mat M = mass_matrix(th2);
  const auto Mldlt = M.ldlt();
  const Mat Minv = Mldlt.solve(Mat::Identity(3, 3));
  dB[1].bottomRows<3>() = -Minv * mass_matrix_d_th2(th2) * Minv;
}

const std::vector<int>& Scara::angle_coordinates() const {
  static const std::vector<int> kAngles{0, 1};
  return kAngles;
}

void Scara::default_bounds(Vec& lower, Vec& upper) const {
  lower.resize(6);
  upper.resize(6);
  lower << -M_PI, -M_PI, 0.5, -4.0, -4.0, -3.0;
  upper << M_PI, M_PI, 3.5, 4.0, 4.0, 3.0;
}

// ---------------------------------------------------------------------------
// Factory
// ---------------------------------------------------------------------------

namespace {

double take(std::map<std::string, double>& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const double v = it->second;
  kv.erase(it);
  return v;
}

}  // namespace

std::shared_ptr<const SystemModel> make_system(
    const std::string& name, const std::map<std::string, double>& params) {
  std::map<std::string, double> kv = params;
  std::shared_ptr<const SystemModel> out;
  if (name == "double_integrator") {
    out = std::make_shared<DoubleIntegrator>();
  } else if (name == "pendulum") {
    PendulumParams p;
    p.mass = take(kv, "mass", p.mass);
    p.length_com = take(kv, "length_com", p.length_com);
    p.inertia = take(kv, "inertia", p.mass * p.length_com * p.length_com);
    p.damping = take(kv, "damping", p.damping);
    p.gravity = take(kv, "gravity", p.gravity);
    out = std::make_shared<Pendulum>(p);
  } else if (name == "diffdrive") {
    out = std::make_shared<DiffDrive>();
  } else if (name == "scara") {
    ScaraParams p;
    p.m1 = take(kv, "m1", p.m1);
    p.m2 = take(kv, "m2", p.m2);
    p.m3 = take(kv, "m3", p.m3);
    p.l1 = take(kv, "l1", p.l1);
    p.l2 = take(kv, "l2", p.l2);
    p.r1 = take(kv, "r1", p.r1);
    p.r2 = take(kv, "r2", p.r2);
    p.Iz1 = take(kv, "Iz1", p.Iz1);
    p.Iz2 = take(kv, "Iz2", p.Iz2);
    p.Iz3 = take(kv, "Iz3", p.Iz3);
    p.gravity = take(kv, "gravity", p.gravity);
    p.arm_height = take(kv, "arm_height", p.arm_height);
    out = std::make_shared<Scara>(p);
  } else {
    throw std::invalid_argument("unknown system: " + name);
  }
  if (!kv.empty())
    throw std::invalid_argument("unknown parameter '" + kv.begin()->first +
                                "' for system " + name);
  return out;
}

}  // namespace kinoplan
