#include "dissipwave/nonlinearity.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dissipwave {

double Jet::norm() const {
  double s = 0.0;
  for (int i = 0; i < dim; ++i) {
    for (int a = 0; a <= dim; ++a) s += at(i, a) * at(i, a);
  }
  return std::sqrt(s);
}

Vec3 NonlinearForm::semilinear_part(const Jet& xi) const {
  Vec3 out{0.0, 0.0, 0.0};
  if (!semilinear) return out;
  semilinear(xi, out);
  for (double& v : out) v *= lambda_factor;
  return out;
}

CoefTensor NonlinearForm::coefficients(const Jet& xi) const {
  CoefTensor c;
  if (quasilinear) quasilinear(xi, c);
  return c;
}

void NonlinearForm::coefficients(const Jet& xi, CoefTensor& c) const {
  c.c.fill(0.0);
  if (quasilinear) quasilinear(xi, c);
}

namespace catalog {

NonlinearForm zero() {
  NonlinearForm f;
  f.kind = FormKind::kZero;
  return f;
}

NonlinearForm semilinear(double kappa) {
  NonlinearForm f;
  f.name = "semilinear";
  f.kind = FormKind::kSpeedSemilinear;
  f.kappa = kappa;
  f.p1 = 2.0;
  f.componentwise = true;
  f.semilinear = [kappa](const Jet& xi, Vec3& out) {
    double speed = 0.0;
    for (int i = 0; i < xi.dim; ++i) speed += xi.at(i, 0) * xi.at(i, 0);
    speed = std::sqrt(speed);
    for (int i = 0; i < xi.dim; ++i) out[static_cast<std::size_t>(i)] = kappa * speed * xi.at(i, 0);
  };
  return f;
}

NonlinearForm quasilinear(double gamma) {
  NonlinearForm f;
  f.name = "quasilinear";
  f.kind = FormKind::kCatalogQuasilinear;
  f.gamma = gamma;
  f.p2 = 2.0;
  f.quasilinear = [gamma](const Jet& xi, CoefTensor& c) {
    const int d = xi.dim;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        for (int a = 0; a <= d; ++a) {
          for (int b = 0; b <= d; ++b) {
            double s = 0.0;
            if (i == j && a == b) s += (a == 0 ? -1.0 : 1.0) * xi.at(i, 0);
            if (a == 0) s += 0.5 * xi.at(j, b);
            if (b == 0) s += 0.5 * xi.at(i, a);
            c.at(i, j, a, b) = gamma * s;
          }
        }
      }
    }
  };
  return f;
}

}  // namespace catalog

Vec3 eval_nonlinearity(const NonlinearForm& form, const Jet& first, const Hessian& second) {
  Vec3 out = form.semilinear_part(first);
  if (!form.has_quasilinear()) return out;
  const CoefTensor c = form.coefficients(first);
  const int d = first.dim;
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      for (int a = 0; a <= d; ++a) {
        for (int b = 0; b <= d; ++b) s += c.at(i, j, a, b) * second.at(j, a, b);
      }
    }
    out[static_cast<std::size_t>(i)] += s;
  }
  return out;
}

NonlinearForm rescale_form(const NonlinearForm& form, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("rescale_form: lambda must be positive");
  NonlinearForm out = form;
  out.lambda_factor = form.lambda_factor * lambda;
  return out;
}

namespace {

double vec_norm(const Vec3& v, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
  return std::sqrt(s);
}

double tensor_norm(const CoefTensor& c) {
  double m = 0.0;
  for (double v : c.c) m = std::max(m, std::abs(v));
  return m;
}

Vec3 raw_semilinear(const NonlinearForm& f, const Jet& xi) {
  Vec3 out{0.0, 0.0, 0.0};
  if (f.semilinear) f.semilinear(xi, out);
  return out;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

FormAudit audit_form(const NonlinearForm& form, int dim, int sample_count, double radius,
                     std::uint64_t seed) {
  if (dim < 2 || dim > 3) throw std::invalid_argument("audit_form: dim must be 2 or 3");
  FormAudit rep;
  rep.samples = sample_count;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int n = dim * (dim + 1);

  std::vector<double> slopes1;
  std::vector<double> slopes2;
  for (int s = 0; s < sample_count; ++s) {
    Jet xi;
    xi.dim = dim;
    double nrm = 0.0;
    for (int i = 0; i < dim; ++i) {
      for (int a = 0; a <= dim; ++a) {
        xi.at(i, a) = gauss(rng);
        nrm += xi.at(i, a) * xi.at(i, a);
      }
    }
    nrm = std::sqrt(nrm);
    const double r = radius * std::pow(unif(rng), 1.0 / n);
    for (double& v : xi.xi) v *= r / nrm;
    const double xn = xi.norm();
    if (xn == 0.0) continue;

    if (form.has_quasilinear()) {
      const CoefTensor c = form.coefficients(xi);
      for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
          for (int a = 0; a <= dim; ++a) {
            for (int b = 0; b <= dim; ++b) {
              rep.symmetry_max_violation =
                  std::max(rep.symmetry_max_violation, std::abs(c.at(i, j, a, b) - c.at(j, i, b, a)));
            }
          }
        }
      }
      rep.growth_constant_p2 =
          std::max(rep.growth_constant_p2, tensor_norm(c) / std::pow(xn, form.p2 - 1.0));
    }
    if (form.has_semilinear()) {
      rep.growth_constant_p1 = std::max(
          rep.growth_constant_p1, vec_norm(raw_semilinear(form, xi), dim) / std::pow(xn, form.p1));
    }

    // Directional derivatives by centered differences along each jet slot.
    const double step = 1e-6 * xn;
    double dF = 0.0;
    double dc = 0.0;
    for (int k = 0; k < 12; ++k) {
      if (k % 4 > dim || k / 4 >= dim) continue;
      Jet plus = xi;
      Jet minus = xi;
      plus.xi[static_cast<std::size_t>(k)] += step;
      minus.xi[static_cast<std::size_t>(k)] -= step;
      if (form.has_semilinear()) {
        const Vec3 fp = raw_semilinear(form, plus);
        const Vec3 fm = raw_semilinear(form, minus);
        Vec3 diff{};
        for (int i = 0; i < 3; ++i) diff[static_cast<std::size_t>(i)] = (fp[i] - fm[i]) / (2 * step);
        dF = std::max(dF, vec_norm(diff, dim));
      }
      if (form.has_quasilinear()) {
        const CoefTensor cp = form.coefficients(plus);
        const CoefTensor cm = form.coefficients(minus);
        for (std::size_t q = 0; q < cp.c.size(); ++q) {
          dc = std::max(dc, std::abs(cp.c[q] - cm.c[q]) / (2 * step));
        }
      }
    }
    rep.derivative_constant_p1 = std::max(rep.derivative_constant_p1, dF / std::pow(xn, form.p1 - 1.0));
    rep.derivative_constant_p2 = std::max(rep.derivative_constant_p2, dc / std::pow(xn, form.p2 - 2.0));

    // Homogeneity exponent along the ray s * xi, s in [2^-8, 1].
    std::vector<double> ls;
    std::vector<double> lf;
    std::vector<double> lc;
    for (int e = 0; e <= 8; ++e) {
      const double scale = std::ldexp(1.0, -e);
      Jet ray = xi;
      for (double& v : ray.xi) v *= scale;
      ls.push_back(std::log(scale));
      if (form.has_semilinear()) lf.push_back(std::log(vec_norm(raw_semilinear(form, ray), dim)));
      if (form.has_quasilinear()) lc.push_back(std::log(tensor_norm(form.coefficients(ray))));
    }
    if (form.has_semilinear() && std::isfinite(lf.back())) slopes1.push_back(slope(ls, lf));
    if (form.has_quasilinear() && std::isfinite(lc.back())) slopes2.push_back(slope(ls, lc) + 1.0);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  rep.fitted_p1 = mean(slopes1);
  rep.fitted_p2 = mean(slopes2);
  return rep;
}

}  // namespace dissipwave
