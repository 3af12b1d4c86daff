#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kinoplan/numeric.hpp"

namespace kinoplan {

/// Control-effort weights of the running cost 1 + u'Ru/2. R must be
/// symmetric positive definite; the inverse is cached because every costate
/// evaluation needs it.
class CostWeights {
 public:
  CostWeights() = default;
  explicit CostWeights(Mat R);
  static CostWeights identity(int m, double scale = 1.0);
  static CostWeights diagonal(const Vec& d);

  const Mat& R() const { return R_; }
  const Mat& R_inv() const { return R_inv_; }
  int dim() const { return static_cast<int>(R_.rows()); }

  double control_cost(const Vec& u) const { return 0.5 * u.dot(R_ * u); }

 private:
  Mat R_;
  Mat R_inv_;
};

/// Affine dynamics xdot = Ax + Bu + c with quadratic control weights,
/// produced by linearize() or written down directly for linear systems.
struct AffineModel {
  Mat A;
  Mat B;
  Vec c;
  CostWeights R;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
};

/// Control-affine system xdot = a(x) + Bc(x) u. Implementations provide the
/// drift, the input matrix and their analytic state derivatives; everything
/// downstream (linearization, costate equations, Hessian blocks) is built
/// from these.
class SystemModel {
 public:
  virtual ~SystemModel() = default;

  virtual std::string_view name() const = 0;
  virtual int state_dim() const = 0;
  virtual int control_dim() const = 0;

  virtual void drift(const Vec& x, Vec& a) const = 0;
  virtual void input_matrix(const Vec& x, Mat& B) const = 0;
  /// J(i,k) = d a_i / d x_k
  virtual void drift_jacobian(const Vec& x, Mat& J) const = 0;
  /// dB[k] = d Bc / d x_k (an n x m matrix per state coordinate)
  virtual void input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const = 0;

  /// False when Bc is constant; lets hot paths skip the input-matrix
  /// derivative entirely.
  virtual bool input_matrix_depends_on_state() const { return true; }

  /// State coordinates treated as wrap-around angles (period 2*pi) by
  /// sampling and goal membership. Integration never wraps.
  virtual const std::vector<int>& angle_coordinates() const;

  /// Default per-coordinate sampling bounds, overridable per scenario.
  virtual void default_bounds(Vec& lower, Vec& upper) const = 0;

 protected:
  static const std::vector<int> kNoAngles;
};

Vec eval_f(const SystemModel& model, const Vec& x, const Vec& u);

/// d f / d x at (x, u); assembles the drift Jacobian with the input-matrix
/// derivative contracted against u.
Mat f_jacobian_x(const SystemModel& model, const Vec& x, const Vec& u);

/// First-order model at (x_hat, u_hat): A = df/dx, B = Bc(x_hat),
/// c = f(x_hat, u_hat) - A x_hat - B u_hat.
AffineModel linearize(const SystemModel& model, const Vec& x_hat, const Vec& u_hat,
                      const CostWeights& R);

/// Split residual g(x, u) = f(x, u) - Ax - Bu (the affine constant is part
/// of g, so f = Ax + Bu + g holds exactly) and its derivatives.
Vec residual_g(const SystemModel& model, const Vec& x, const Vec& u,
               const AffineModel& affine);
Mat residual_g_x(const SystemModel& model, const Vec& x, const Vec& u,
                 const AffineModel& affine);
Mat residual_g_u(const SystemModel& model, const Vec& x,
                 const AffineModel& affine);

/// Minimum-principle control u = -R^{-1} Bc(x)' lambda.
Vec optimal_control(const SystemModel& model, const Vec& x, const Vec& lambda,
                    const CostWeights& R);

/// H = 1 + u'Ru/2 + lambda' f(x, u) evaluated at the minimizing u.
double hamiltonian(const SystemModel& model, const Vec& x, const Vec& lambda,
                   const CostWeights& R);

// ---------------------------------------------------------------------------
// Concrete systems
// ---------------------------------------------------------------------------

/// 1-D double integrator; linear, used as the analytic oracle system.
class DoubleIntegrator final : public SystemModel {
 public:
  bool input_matrix_depends_on_state() const override { return false; }
  std::string_view name() const override { return "double_integrator"; }
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }
  void drift(const Vec& x, Vec& a) const override;
  void input_matrix(const Vec& x, Mat& B) const override;
  void drift_jacobian(const Vec& x, Mat& J) const override;
  void input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const override;
  void default_bounds(Vec& lower, Vec& upper) const override;
};

/// Arbitrary linear system xdot = Ax + Bu + c wrapped as a SystemModel;
/// test helper for the solver fixed-point checks.
class LinearSystem final : public SystemModel {
 public:
  bool input_matrix_depends_on_state() const override { return false; }
  LinearSystem(Mat A, Mat B, Vec c);
  std::string_view name() const override { return "linear"; }
  int state_dim() const override { return static_cast<int>(A_.rows()); }
  int control_dim() const override { return static_cast<int>(B_.cols()); }
  void drift(const Vec& x, Vec& a) const override;
  void input_matrix(const Vec& x, Mat& B) const override;
  void drift_jacobian(const Vec& x, Mat& J) const override;
  void input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const override;
  void default_bounds(Vec& lower, Vec& upper) const override;

 private:
  Mat A_, B_;
  Vec c_;
};

struct PendulumParams {
  double mass = 1.0;
  double length_com = 0.5;
  double inertia = 0.25;  // mass * length_com^2 by default
  double damping = 0.1;
  double gravity = 9.8;
};

/// Torque-driven pendulum, I*thdd + b*thd + m*g*lc*sin(th) = u.
/// State (theta, theta_dot), theta = 0 hanging down.
class Pendulum final : public SystemModel {
 public:
  bool input_matrix_depends_on_state() const override { return false; }
  explicit Pendulum(PendulumParams p = {});
  std::string_view name() const override { return "pendulum"; }
  int state_dim() const override { return 2; }
  int control_dim() const override { return 1; }
  void drift(const Vec& x, Vec& a) const override;
  void input_matrix(const Vec& x, Mat& B) const override;
  void drift_jacobian(const Vec& x, Mat& J) const override;
  void input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const override;
  const std::vector<int>& angle_coordinates() const override;
  void default_bounds(Vec& lower, Vec& upper) const override;
  const PendulumParams& params() const { return params_; }

 private:
  PendulumParams params_;
};

/// Two-wheeled mobile robot, state (px, py, theta, v, w), controls the two
/// wheel forces: vdot = u1 + u2, wdot = u1 - u2.
class DiffDrive final : public SystemModel {
 public:
  bool input_matrix_depends_on_state() const override { return false; }
  std::string_view name() const override { return "diffdrive"; }
  int state_dim() const override { return 5; }
  int control_dim() const override { return 2; }
  void drift(const Vec& x, Vec& a) const override;
  void input_matrix(const Vec& x, Mat& B) const override;
  void drift_jacobian(const Vec& x, Mat& J) const override;
  void input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const override;
  const std::vector<int>& angle_coordinates() const override;
  void default_bounds(Vec& lower, Vec& upper) const override;
};

struct ScaraParams {
  double m1 = 1.0, m2 = 1.0, m3 = 0.5;
  double l1 = 1.0, l2 = 1.0;
  double r1 = 0.5, r2 = 0.5;
  double Iz1 = 0.1, Iz2 = 0.1, Iz3 = 0.05;
  double gravity = 9.8;
  double arm_height = 3.2;  // plane of the two rotational links (collision model)

  double alpha() const { return Iz1 + r1 * r1 * m1 + l1 * l1 * m2 + l1 * l1 * m3; }
  double beta() const { return Iz2 + Iz3 + l2 * l2 * m3 + m2 * r2 * r2; }
  double gamma_scara() const { return l1 * l2 * m3 + l1 * m2 * r2; }
};

/// SCARA arm: two rotational joints plus one prismatic (vertical) joint.
/// State (th1, th2, th3, w1, w2, w3); M(th) thdd + C(th, thd) thd + N = u.
class Scara final : public SystemModel {
 public:
  explicit Scara(ScaraParams p = {});
  std::string_view name() const override { return "scara"; }
  int state_dim() const override { return 6; }
  int control_dim() const override { return 3; }
  void drift(const Vec& x, Vec& a) const override;
  void input_matrix(const Vec& x, Mat& B) const override;
  void drift_jacobian(const Vec& x, Mat& J) const override;
  void input_matrix_jacobian(const Vec& x, std::vector<Mat>& dB) const override;
  const std::vector<int>& angle_coordinates() const override;
  void default_bounds(Vec& lower, Vec& upper) const override;
  const ScaraParams& params() const { return params_; }

  Mat mass_matrix(double th2) const;
  Mat coriolis_matrix(double th2, double w1, double w2) const;

 private:
  // h = -C(th, thd) thd - N and its partials; th2/velocity terms only.
  Vec bias_force(double th2, double w1, double w2) const;
  Mat mass_matrix_d_th2(double th2) const;

  ScaraParams params_;
};

/// Builds a system by scenario name; `params` holds optional overrides
/// (keys matching the param struct fields). Throws std::invalid_argument on
/// unknown names or keys.
std::shared_ptr<const SystemModel> make_system(
    const std::string& name, const std::map<std::string, double>& params = {});

}  // namespace kinoplan
