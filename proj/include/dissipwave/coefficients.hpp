#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "dissipwave/geometry.hpp"

namespace dissipwave {

/// Small symmetric matrix, d <= 3; fixed maximum size so it never allocates.
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nonincreasing time modulation tau(t) of the damping. kIncreasing exists
/// only as a (B2) counterexample.
enum class TimeProfile { kConstant, kExponential, kRational, kIncreasing };

TimeProfile parse_time_profile(const std::string& name);
std::string to_string(TimeProfile p);

double profile_value(TimeProfile p, double t);
double profile_derivative(TimeProfile p, double t);
/// tau(infinity); infinite for the increasing profile.
double profile_limit(TimeProfile p);

enum class MatrixMode { kScalar, kAnisotropic };

MatrixMode parse_matrix_mode(const std::string& name);
std::string to_string(MatrixMode m);

/// Quintic smoothstep S(s) = 6s^5 - 15s^4 + 10s^3 clamped to [0,1].
double smoothstep5(double s);
double smoothstep5_derivative(double s);

/// The physical damping matrix
///   B(t,x) = sign * tau(t) * chi(|x|) * b0 * (I + anisotropy * xhat xhat^T)
/// with chi = 0 for |x| <= cutoff_inner and chi = 1 for |x| >= R.
struct DampingModel {
  double b0 = 1.0;
  double R = 4.0;
  double cutoff_inner = 2.0;
  TimeProfile time_profile = TimeProfile::kConstant;
  MatrixMode matrix_mode = MatrixMode::kScalar;
  double anisotropy = 0.0;
  /// -1 flips the sign of B (negative controls only).
  double sign = 1.0;

  /// Default cutoff start (r_obs + R)/2 - w with w = 1/2.
  static double default_cutoff_inner(double r_obs, double R) { return 0.5 * (r_obs + R) - 0.5; }

  [[nodiscard]] double chi(const Point& x) const;
  /// Scalar factor sign*tau*chi*b0; the whole matrix in scalar mode.
  [[nodiscard]] double scalar(double t, const Point& x) const;
  [[nodiscard]] SmallMatrix eval(int dim, double t, const Point& x) const;
  /// d_t B(t, x), exact from the profile derivative.
  [[nodiscard]] SmallMatrix eval_dt(int dim, double t, const Point& x) const;
  /// sup over t of the largest eigenvalue, sampled over the given points.
  [[nodiscard]] double sup_norm(int dim, const std::vector<Point>& points, double t_max) const;

  void validate() const;
};

/// B_lambda(t,x) = lambda * B(lambda t, lambda x), the coefficient of the
/// rescaled problem.
struct DampingField {
  DampingModel model;
  double lambda = 1.0;

  [[nodiscard]] SmallMatrix eval(int dim, double t, const Point& x) const;
  /// d_t B_lambda(t, x) = lambda^2 (d_t B)(lambda t, lambda x).
  [[nodiscard]] SmallMatrix eval_dt(int dim, double t, const Point& x) const;
  [[nodiscard]] double scalar(double t, const Point& x) const;
  [[nodiscard]] bool is_scalar() const { return model.matrix_mode == MatrixMode::kScalar; }
  /// Spatial part lambda*sign*b0*chi(lambda x); the scalar coefficient is
  /// this times tau(lambda t).
  [[nodiscard]] double spatial_factor(const Point& x) const;
  [[nodiscard]] double time_factor(double t) const;
  /// lambda tau'(lambda t); d_t of the scalar coefficient is spatial_factor times this.
  [[nodiscard]] double time_derivative_factor(double t) const;
};

SmallMatrix eval_damping(const DampingModel& model, int dim, double t, const Point& x);

struct DampingWitness {
  double t = 0.0;
  Point x{};
  double eigenvalue = 0.0;
};

struct B4Entry {
  std::string multi_index;  // e.g. "t", "x0", "x0x1"
  int order = 0;
  double ratio = 0.0;  // sup|d^a B_lambda| / (lambda^{|a|+1} sup|d^a B|)
};

struct DampingAudit {
  bool B1_pass = false;
  bool B2_pass = false;
  bool B3_pass = false;
  bool B4_pass = false;
  DampingWitness B1_witness;  // smallest eigenvalue found
  DampingWitness B2_witness;  // largest eigenvalue of d_t B found
  DampingWitness B3_witness;  // smallest far-field eigenvalue found
  double lambda = 1.0;
  std::vector<B4Entry> B4_table;
};

/// Eigenvalue audit of B_lambda on every fluid cell of `grid` at each time
/// sample; lambda = 1 audits the original (B1)-(B3). d_t B uses centered
/// differences with step dt_audit.
DampingAudit audit_damping(const DampingModel& model, const ExteriorGrid& grid,
                           const std::vector<double>& time_samples, double lambda = 1.0,
                           double dt_audit = 1e-3, double tolerance = 1e-8);

struct MultiplierValue {
  Point h{};
  double div_h = 0.0;
  SmallMatrix grad_h;
};

/// h(x) = x phi(|x|) with phi = b0 for r <= R/lambda and b0 R/(lambda r)
/// beyond; phi' is taken from the left at the kink.
struct MultiplierField {
  double b0 = 1.0;
  double R = 4.0;
  double lambda = 1.0;

  [[nodiscard]] double kink() const { return R / lambda; }
  [[nodiscard]] double phi(double r) const { return r <= kink() ? b0 : b0 * R / (lambda * r); }
  [[nodiscard]] double phi_prime(double r) const {
    return r <= kink() ? 0.0 : -b0 * R / (lambda * r * r);
  }
  [[nodiscard]] Point h(const Point& x) const;
  [[nodiscard]] double sup_norm() const { return b0 * R / lambda; }
};

MultiplierValue eval_multiplier(const MultiplierField& field, int dim, const Point& x);

/// d0(x) = |x| for d >= 3 and |x| log(A|x|) for d = 2.
struct WeightD0 {
  int dim = 2;
  double A = 2.0;

  [[nodiscard]] double operator()(const Point& x) const;
  /// Throws ConfigError unless A|x| >= 2 on every fluid cell (d = 2 only).
  void validate(const ExteriorGrid& grid) const;
};

double eval_weight_d0(const WeightD0& weight, const Point& x);

}  // namespace dissipwave
