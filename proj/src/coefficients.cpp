#include "dissipwave/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dissipwave {

TimeProfile parse_time_profile(const std::string& name) {
  if (name == "constant") return TimeProfile::kConstant;
  if (name == "exponential") return TimeProfile::kExponential;
  if (name == "rational") return TimeProfile::kRational;
  if (name == "increasing") return TimeProfile::kIncreasing;
  throw ConfigError("unknown time profile '" + name + "'");
}

std::string to_string(TimeProfile p) {
  switch (p) {
    case TimeProfile::kConstant: return "constant";
    case TimeProfile::kExponential: return "exponential";
    case TimeProfile::kRational: return "rational";
    case TimeProfile::kIncreasing: return "increasing";
  }
  return "constant";
}

double profile_value(TimeProfile p, double t) {
  switch (p) {
    case TimeProfile::kConstant: return 1.0;
    case TimeProfile::kExponential: return 1.0 + std::exp(-t);
    case TimeProfile::kRational: return 1.0 + 1.0 / (1.0 + t);
    case TimeProfile::kIncreasing: return 1.0 + t;
  }
  return 1.0;
}

double profile_derivative(TimeProfile p, double t) {
  switch (p) {
    case TimeProfile::kConstant: return 0.0;
    case TimeProfile::kExponential: return -std::exp(-t);
    case TimeProfile::kRational: return -1.0 / ((1.0 + t) * (1.0 + t));
    case TimeProfile::kIncreasing: return 1.0;
  }
  return 0.0;
}

double profile_limit(TimeProfile p) {
  return p == TimeProfile::kIncreasing ? std::numeric_limits<double>::infinity() : 1.0;
}

MatrixMode parse_matrix_mode(const std::string& name) {
  if (name == "scalar") return MatrixMode::kScalar;
  if (name == "anisotropic") return MatrixMode::kAnisotropic;
  throw ConfigError("unknown matrix mode '" + name + "'");
}

std::string to_string(MatrixMode m) { return m == MatrixMode::kScalar ? "scalar" : "anisotropic"; }

double smoothstep5(double s) {
  s = std::clamp(s, 0.0, 1.0);
  return s * s * s * (s * (6.0 * s - 15.0) + 10.0);
}

double smoothstep5_derivative(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return 30.0 * s * s * (s - 1.0) * (s - 1.0);
}

double DampingModel::chi(const Point& x) const {
  const double r = norm(x);
  return smoothstep5((r - cutoff_inner) / (R - cutoff_inner));
}

double DampingModel::scalar(double t, const Point& x) const {
  return sign * profile_value(time_profile, t) * chi(x) * b0;
}

namespace {

SmallMatrix shaped(const DampingModel& model, int dim, double s, const Point& x) {
  SmallMatrix m = SmallMatrix::Identity(dim, dim) * s;
  if (model.matrix_mode == MatrixMode::kAnisotropic && model.anisotropy != 0.0) {
    const double r = norm(x);
    if (r > 0.0) {
      const double f = s * model.anisotropy / (r * r);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) += f * x[i] * x[j];
    }
  }
  return m;
}

}  // namespace

SmallMatrix DampingModel::eval_dt(int dim, double t, const Point& x) const {
  return shaped(*this, dim, sign * profile_derivative(time_profile, t) * chi(x) * b0, x);
}

SmallMatrix DampingModel::eval(int dim, double t, const Point& x) const {
  SmallMatrix m = SmallMatrix::Identity(dim, dim) * scalar(t, x);
  if (matrix_mode == MatrixMode::kAnisotropic && anisotropy != 0.0) {
    const double r = norm(x);
    if (r > 0.0) {
      const double s = scalar(t, x) * anisotropy / (r * r);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) += s * x[i] * x[j];
    }
  }
  return m;
}

double DampingModel::sup_norm(int dim, const std::vector<Point>& points, double t_max) const {
  double tau_max = 0.0;
  constexpr int kSamples = 64;
  for (int k = 0; k <= kSamples; ++k) {
    tau_max = std::max(tau_max, std::abs(profile_value(time_profile, t_max * k / kSamples)));
  }
  double chi_max = 0.0;
  for (const auto& p : points) chi_max = std::max(chi_max, chi(p));
  const double extra = matrix_mode == MatrixMode::kAnisotropic ? std::max(0.0, anisotropy) : 0.0;
  (void)dim;
  return tau_max * chi_max * b0 * (1.0 + extra);
}

void DampingModel::validate() const {
  std::ostringstream err;
  if (!(b0 > 0.0)) err << "b0 must be positive; ";
  if (!(R > 0.0)) err << "R must be positive; ";
  if (!(cutoff_inner >= 0.0 && cutoff_inner < R)) err << "cutoff_inner must lie in [0, R); ";
  if (anisotropy < 0.0) err << "anisotropy must be nonnegative; ";
  if (const auto s = err.str(); !s.empty()) throw ConfigError(s);
}

SmallMatrix DampingField::eval(int dim, double t, const Point& x) const {
  const Point sx{lambda * x[0], lambda * x[1], lambda * x[2]};
  return lambda * model.eval(dim, lambda * t, sx);
}

SmallMatrix DampingField::eval_dt(int dim, double t, const Point& x) const {
  const Point sx{lambda * x[0], lambda * x[1], lambda * x[2]};
  return (lambda * lambda) * model.eval_dt(dim, lambda * t, sx);
}

double DampingField::time_derivative_factor(double t) const {
  return lambda * profile_derivative(model.time_profile, lambda * t);
}

double DampingField::scalar(double t, const Point& x) const {
  return spatial_factor(x) * time_factor(t);
}

double DampingField::spatial_factor(const Point& x) const {
  const Point sx{lambda * x[0], lambda * x[1], lambda * x[2]};
  return lambda * model.sign * model.b0 * model.chi(sx);
}

double DampingField::time_factor(double t) const {
  return profile_value(model.time_profile, lambda * t);
}

SmallMatrix eval_damping(const DampingModel& model, int dim, double t, const Point& x) {
  return model.eval(dim, t, x);
}

namespace {

struct Extremes {
  double min;
  double max;
};

Extremes eigen_extremes(const SmallMatrix& m) {
  Eigen::SelfAdjointEigenSolver<SmallMatrix> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return {ev.minCoeff(), ev.maxCoeff()};
}

// Partial derivative of B_lambda (or B at mapped points) by nested centered
// differences. `axes` lists derivative directions, -1 meaning time.
double max_abs_derivative(const DampingField& field, int dim, double t, const Point& x,
                          const std::vector<int>& axes, double step) {
  // Expand the product of difference operators into 2^k evaluations.
  const std::size_t k = axes.size();
  SmallMatrix acc = SmallMatrix::Zero(dim, dim);
  for (std::size_t mask = 0; mask < (std::size_t{1} << k); ++mask) {
    double tt = t;
    Point xx = x;
    double sgn = 1.0;
    for (std::size_t q = 0; q < k; ++q) {
      const double s = (mask >> q) & 1u ? step : -step;
      if (!((mask >> q) & 1u)) sgn = -sgn;
      if (axes[q] < 0) {
        tt += s;
      } else {
        xx[axes[q]] += s;
      }
    }
    acc += sgn * field.eval(dim, tt, xx);
  }
  acc /= std::pow(2.0 * step, static_cast<double>(k));
  return acc.cwiseAbs().maxCoeff();
}

std::string multi_index_name(const std::vector<int>& axes) {
  if (axes.empty()) return "0";
  std::string s;
  for (int a : axes) s += a < 0 ? "t" : "x" + std::to_string(a);
  return s;
}

}  // namespace

DampingAudit audit_damping(const DampingModel& model, const ExteriorGrid& grid,
                           const std::vector<double>& time_samples, double lambda,
                           double dt_audit, double tolerance) {
  const int dim = grid.dim();
  const DampingField field{model, lambda};
  DampingAudit audit;
  audit.lambda = lambda;
  audit.B1_witness.eigenvalue = std::numeric_limits<double>::infinity();
  audit.B2_witness.eigenvalue = -std::numeric_limits<double>::infinity();
  audit.B3_witness.eigenvalue = std::numeric_limits<double>::infinity();
  const double far_radius = model.R / lambda;
  bool any_far = false;

  for (double t : time_samples) {
    const double t_lo = std::max(0.0, t - dt_audit);
    const double t_hi = t_lo + 2.0 * dt_audit;
    for (std::size_t idx : grid.fluid_cells()) {
      const Point x = grid.center(idx);
      const SmallMatrix b = field.eval(dim, t, x);
      const auto e = eigen_extremes(b);
      if (e.min < audit.B1_witness.eigenvalue) audit.B1_witness = {t, x, e.min};
      const SmallMatrix db = (field.eval(dim, t_hi, x) - field.eval(dim, t_lo, x)) / (t_hi - t_lo);
      const auto de = eigen_extremes(db);
      if (de.max > audit.B2_witness.eigenvalue) audit.B2_witness = {t, x, de.max};
      if (norm(x) >= far_radius) {
        any_far = true;
        if (e.min < audit.B3_witness.eigenvalue) audit.B3_witness = {t, x, e.min};
      }
    }
  }
  const double scale = std::max(1.0, lambda * model.b0);
  audit.B1_pass = audit.B1_witness.eigenvalue >= -tolerance * scale;
  audit.B2_pass = audit.B2_witness.eigenvalue <= tolerance * scale;
  audit.B3_pass = !any_far || audit.B3_witness.eigenvalue >= lambda * model.b0 * (1.0 - tolerance);

  // (B4): compare derivatives of B_lambda on this grid with those of B at the
  // mapped points lambda*x, lambda*t, differencing with steps h/lambda and h.
  const DampingField original{model, 1.0};
  const std::vector<std::vector<int>> multi_indices = [&] {
    std::vector<std::vector<int>> out{{}};
    for (int a = -1; a < dim; ++a) out.push_back({a});
    for (int a = -1; a < dim; ++a)
      for (int b = a; b < dim; ++b) out.push_back({a, b});
    return out;
  }();
  const double h = 1e-3;
  // Derivative sups are sampled on at most ~20k cells.
  const auto& cells = grid.fluid_cells();
  const std::size_t stride = std::max<std::size_t>(1, cells.size() / 20000);
  audit.B4_pass = true;
  for (const auto& axes : multi_indices) {
    double sup_scaled = 0.0;
    double sup_orig = 0.0;
    for (double t : time_samples) {
      const double ts = std::max(t, 2.0 * h / lambda);
      for (std::size_t c = 0; c < cells.size(); c += stride) {
        const Point x = grid.center(cells[c]);
        const Point lx{lambda * x[0], lambda * x[1], lambda * x[2]};
        sup_scaled = std::max(sup_scaled, max_abs_derivative(field, dim, ts, x, axes, h / lambda));
        sup_orig = std::max(sup_orig, max_abs_derivative(original, dim, lambda * ts, lx, axes, h));
      }
    }
    const int order = static_cast<int>(axes.size());
    const double denom = std::pow(lambda, order + 1) * sup_orig;
    B4Entry entry{multi_index_name(axes), order, denom > 0.0 ? sup_scaled / denom : 0.0};
    if (denom == 0.0 && sup_scaled > 0.0) entry.ratio = std::numeric_limits<double>::infinity();
    audit.B4_pass = audit.B4_pass && entry.ratio <= 1.0 + 1e-8;
    audit.B4_table.push_back(entry);
  }
  return audit;
}

Point MultiplierField::h(const Point& x) const {
  const double p = phi(norm(x));
  return {x[0] * p, x[1] * p, x[2] * p};
}

MultiplierValue eval_multiplier(const MultiplierField& field, int dim, const Point& x) {
  const double r = norm(x);
  if (!(r > 0.0)) throw std::invalid_argument("multiplier is undefined at the origin");
  MultiplierValue out;
  const double p = field.phi(r);
  const double dp = field.phi_prime(r);
  out.h = field.h(x);
  out.div_h = dim * p + dp * r;
  out.grad_h = SmallMatrix::Zero(dim, dim);
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      out.grad_h(i, j) = (i == j ? p : 0.0) + dp * x[i] * x[j] / r;
    }
  }
  return out;
}

double WeightD0::operator()(const Point& x) const {
  const double r = norm(x);
  return dim >= 3 ? r : r * std::log(A * r);
}

void WeightD0::validate(const ExteriorGrid& grid) const {
  if (dim != 2) return;
  if (!(A > 0.0)) throw ConfigError("weight.A must be positive");
  double inf = std::numeric_limits<double>::infinity();
  for (std::size_t idx : grid.fluid_cells()) inf = std::min(inf, A * norm(grid.center(idx)));
  if (inf < 2.0) {
    std::ostringstream os;
    os << "weight.A = " << A << " violates inf A|x| >= 2 over the domain (inf = " << inf << ")";
    throw ConfigError(os.str());
  }
}

double eval_weight_d0(const WeightD0& weight, const Point& x) { return weight(x); }

}  // namespace dissipwave
