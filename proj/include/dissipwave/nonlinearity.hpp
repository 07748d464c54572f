#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>

namespace dissipwave {

/// First-order jet xi_{i,a} = d_a v^i of a d-vector field, a = 0 being time.
struct Jet {
  int dim = 2;
  std::array<double, 12> xi{};

  [[nodiscard]] double& at(int i, int a) { return xi[static_cast<std::size_t>(i * 4 + a)]; }
  [[nodiscard]] double at(int i, int a) const { return xi[static_cast<std::size_t>(i * 4 + a)]; }
  [[nodiscard]] double norm() const;
};

/// Second derivatives d_a d_b v^j, symmetric in (a, b).
struct Hessian {
  std::array<double, 48> h{};

  [[nodiscard]] double& at(int j, int a, int b) {
    return h[static_cast<std::size_t>(j * 16 + a * 4 + b)];
  }
  [[nodiscard]] double at(int j, int a, int b) const {
    return h[static_cast<std::size_t>(j * 16 + a * 4 + b)];
  }
};

/// Quasilinear coefficients c_{ij}^{ab}.
struct CoefTensor {
  std::array<double, 144> c{};

  [[nodiscard]] double& at(int i, int j, int a, int b) {
    return c[static_cast<std::size_t>(((i * 3 + j) * 4 + a) * 4 + b)];
  }
  [[nodiscard]] double at(int i, int j, int a, int b) const {
    return c[static_cast<std::size_t>(((i * 3 + j) * 4 + a) * 4 + b)];
  }
};

using Vec3 = std::array<double, 3>;
using SemilinearFn = std::function<void(const Jet&, Vec3&)>;
using QuasilinearFn = std::function<void(const Jet&, CoefTensor&)>;

enum class FormKind { kZero, kSpeedSemilinear, kCatalogQuasilinear, kCustom };

/// F(dv, d^2 v)_i = lambda_factor * Ftilde_i(dv) + sum_{j,a,b} c_{ij}^{ab}(dv) d_a d_b v^j.
struct NonlinearForm {
  std::string name = "zero";
  /// Catalog entries let the solver inline the evaluation; kCustom always
  /// goes through the callbacks.
  FormKind kind = FormKind::kCustom;
  SemilinearFn semilinear;
  QuasilinearFn quasilinear;
  double p1 = 2.0;
  double p2 = 2.0;
  double lambda_factor = 1.0;
  /// Ftilde_i depends on component i only through factors of d_a v^i, so a
  /// component that starts at zero stays zero.
  bool componentwise = false;
  /// Catalog parameters, kept for reporting.
  double kappa = 0.0;
  double gamma = 0.0;

  [[nodiscard]] bool has_semilinear() const { return static_cast<bool>(semilinear); }
  [[nodiscard]] bool has_quasilinear() const { return static_cast<bool>(quasilinear); }
  [[nodiscard]] bool is_zero() const { return !has_semilinear() && !has_quasilinear(); }

  /// lambda_factor * Ftilde(xi); zero when there is no semilinear part.
  [[nodiscard]] Vec3 semilinear_part(const Jet& xi) const;
  /// c(xi); zero when there is no quasilinear part.
  [[nodiscard]] CoefTensor coefficients(const Jet& xi) const;
  /// Same, written into `c` (zeroed first).
  void coefficients(const Jet& xi, CoefTensor& c) const;
};

namespace catalog {

NonlinearForm zero();
/// Ftilde_i = kappa |d_t v| d_t v^i.
NonlinearForm semilinear(double kappa);
/// c_{ij}^{ab}(xi) = gamma * ( delta_ij eta^{ab} xi_{i0}
///                           + (delta_{a0} xi_{jb} + delta_{b0} xi_{ia}) / 2 ),
/// eta = diag(-1, 1, ..., 1); linear in xi and symmetric under (i,a)<->(j,b).
NonlinearForm quasilinear(double gamma);

}  // namespace catalog

Vec3 eval_nonlinearity(const NonlinearForm& form, const Jet& first, const Hessian& second);

NonlinearForm rescale_form(const NonlinearForm& form, double lambda);

struct FormAudit {
  double symmetry_max_violation = 0.0;
  double growth_constant_p1 = 0.0;   // max |Ftilde(xi)| / |xi|^p1
  double growth_constant_p2 = 0.0;   // max |c(xi)| / |xi|^(p2-1)
  double derivative_constant_p1 = 0.0;  // max |D Ftilde(xi)| / |xi|^(p1-1)
  double derivative_constant_p2 = 0.0;  // max |D c(xi)| / |xi|^(p2-2)
  double fitted_p1 = 0.0;  // log-log slope of |Ftilde(s xi)| in s
  double fitted_p2 = 0.0;  // 1 + log-log slope of |c(s xi)| in s
  int samples = 0;
};

FormAudit audit_form(const NonlinearForm& form, int dim, int sample_count, double radius,
                     std::uint64_t seed = 7);

}  // namespace dissipwave
