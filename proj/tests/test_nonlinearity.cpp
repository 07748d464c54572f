#include <doctest.h>

#include <cmath>
#include <random>

#include "dissipwave/nonlinearity.hpp"

using namespace dissipwave;

namespace {

Jet random_jet(std::mt19937_64& rng, int dim, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Jet xi;
  xi.dim = dim;
  for (int i = 0; i < dim; ++i)
    for (int a = 0; a <= dim; ++a) xi.at(i, a) = u(rng);
  return xi;
}

Hessian random_hessian(std::mt19937_64& rng, int dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Hessian h;
  for (int j = 0; j < dim; ++j)
    for (int a = 0; a <= dim; ++a)
      for (int b = a; b <= dim; ++b) h.at(j, a, b) = h.at(j, b, a) = u(rng);
  return h;
}

NonlinearForm squared_velocity() {
  NonlinearForm f;
  f.name = "squared_velocity";
  f.semilinear = [](const Jet& xi, Vec3& out) {
    for (int i = 0; i < xi.dim; ++i) out[i] = xi.at(i, 0) * xi.at(i, 0);
  };
  return f;
}

// Generic symmetric tensor linear in xi: c_ij^ab = gamma delta_ij sum_k w_abk xi_k,
// with w symmetric in (a, b).
struct GenericTensor {
  double gamma;
  std::array<double, 4 * 4 * 12> w{};

  explicit GenericTensor(double g, std::mt19937_64& rng) : gamma(g) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int a = 0; a < 4; ++a)
      for (int b = a; b < 4; ++b)
        for (int k = 0; k < 12; ++k) w[(a * 4 + b) * 12 + k] = w[(b * 4 + a) * 12 + k] = u(rng);
  }
  double operator()(const Jet& xi, int i, int j, int a, int b) const {
    if (i != j) return 0.0;
    double s = 0.0;
    for (int k = 0; k < 12; ++k) s += w[(a * 4 + b) * 12 + k] * xi.xi[k];
    return gamma * s;
  }
};

}  // namespace

TEST_CASE("zero jet gives zero for every catalog form") {
  const Jet xi;
  const Hessian h;
  for (const auto& f : {catalog::zero(), catalog::semilinear(0.3), catalog::quasilinear(0.05)}) {
    const Vec3 out = eval_nonlinearity(f, xi, h);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.0);
  }
}

TEST_CASE("squared velocity form") {
  Jet xi;
  xi.dim = 3;
  xi.at(0, 0) = 0.1;
  xi.at(1, 0) = 0.2;
  xi.at(2, 0) = 0.3;
  const Vec3 out = eval_nonlinearity(squared_velocity(), xi, Hessian{});
  CHECK(out[0] == doctest::Approx(0.01));
  CHECK(out[1] == doctest::Approx(0.04));
  CHECK(out[2] == doctest::Approx(0.09));
}

TEST_CASE("quasilinear evaluation matches a quadruple-loop oracle") {
  std::mt19937_64 rng(42);
  GenericTensor tensor(0.05, rng);
  NonlinearForm f;
  f.name = "generic";
  f.quasilinear = [&tensor](const Jet& xi, CoefTensor& c) {
    for (int i = 0; i < xi.dim; ++i)
      for (int j = 0; j < xi.dim; ++j)
        for (int a = 0; a <= xi.dim; ++a)
          for (int b = 0; b <= xi.dim; ++b) c.at(i, j, a, b) = tensor(xi, i, j, a, b);
  };
  for (int dim : {2, 3}) {
    for (int trial = 0; trial < 50; ++trial) {
      const Jet xi = random_jet(rng, dim);
      const Hessian h = random_hessian(rng, dim);
      const Vec3 out = eval_nonlinearity(f, xi, h);
      for (int i = 0; i < dim; ++i) {
        double oracle = 0.0;
        for (int j = 0; j < dim; ++j)
          for (int a = 0; a <= dim; ++a)
            for (int b = 0; b <= dim; ++b) oracle += tensor(xi, i, j, a, b) * h.at(j, a, b);
        CHECK(std::abs(out[i] - oracle) <= 1e-14);
      }
    }
  }
}

TEST_CASE("catalog quasilinear tensor matches its closed form") {
  std::mt19937_64 rng(3);
  const auto f = catalog::quasilinear(0.05);
  const Jet xi = random_jet(rng, 3);
  const CoefTensor c = f.coefficients(xi);
  CHECK(c.at(0, 0, 0, 0) == doctest::Approx(0.05 * (-xi.at(0, 0) + xi.at(0, 0))));
  CHECK(c.at(1, 1, 2, 2) == doctest::Approx(0.05 * xi.at(1, 0)));
  CHECK(c.at(0, 2, 0, 1) == doctest::Approx(0.05 * 0.5 * xi.at(2, 1)));
  CHECK(c.at(2, 0, 1, 0) == doctest::Approx(0.05 * 0.5 * xi.at(2, 1)));
  CHECK(c.at(0, 1, 1, 2) == 0.0);
}

TEST_CASE("rescale_form scales only the semilinear part") {
  std::mt19937_64 rng(5);
  NonlinearForm both = catalog::semilinear(0.7);
  both.quasilinear = catalog::quasilinear(0.05).quasilinear;
  SUBCASE("lambda = 1 is the identity") {
    const auto same = rescale_form(both, 1.0);
    const Jet xi = random_jet(rng, 2);
    const Hessian h = random_hessian(rng, 2);
    CHECK(eval_nonlinearity(same, xi, h) == eval_nonlinearity(both, xi, h));
  }
  SUBCASE("lambda = 1/2 halves the squared velocity form") {
    const auto half = rescale_form(squared_velocity(), 0.5);
    const Jet xi = random_jet(rng, 2);
    const Vec3 out = half.semilinear_part(xi);
    CHECK(out[0] == 0.5 * xi.at(0, 0) * xi.at(0, 0));
    CHECK(out[1] == 0.5 * xi.at(1, 0) * xi.at(1, 0));
  }
  SUBCASE("coefficients unchanged and rescale composes to identity") {
    for (double lambda : {0.5, 0.25, 2.0}) {
      const auto scaled = rescale_form(both, lambda);
      const auto back = rescale_form(scaled, 1.0 / lambda);
      for (int trial = 0; trial < 10; ++trial) {
        const Jet xi = random_jet(rng, 3);
        CHECK(scaled.coefficients(xi).c == both.coefficients(xi).c);
        CHECK(back.semilinear_part(xi) == both.semilinear_part(xi));
      }
    }
  }
  CHECK_THROWS(rescale_form(both, 0.0));
}

TEST_CASE("quadratic homogeneity of the semilinear catalog form") {
  std::mt19937_64 rng(11);
  const auto f = catalog::semilinear(0.4);
  for (int trial = 0; trial < 20; ++trial) {
    Jet xi = random_jet(rng, 2);
    const Vec3 base = f.semilinear_part(xi);
    Jet scaled = xi;
    for (double& v : scaled.xi) v *= 4.0;
    const Vec3 out = f.semilinear_part(scaled);
    for (int i = 0; i < 2; ++i) CHECK(out[i] == 16.0 * base[i]);
  }
}

TEST_CASE("form audit") {
  SUBCASE("symmetric catalog form has no violation") {
    const auto rep = audit_form(catalog::quasilinear(0.05), 3, 200, 0.5);
    CHECK(rep.symmetry_max_violation == 0.0);
    CHECK(rep.fitted_p2 == doctest::Approx(2.0).epsilon(0.025));
    CHECK(rep.growth_constant_p2 > 0.0);
    CHECK(std::isfinite(rep.derivative_constant_p2));
  }
  SUBCASE("broken form reports a positive violation") {
    NonlinearForm broken;
    broken.quasilinear = [](const Jet& xi, CoefTensor& c) {
      c.at(0, 1, 0, 1) = xi.at(0, 0);
      c.at(1, 0, 1, 0) = 2.0 * xi.at(0, 0);
    };
    const auto rep = audit_form(broken, 2, 50, 1.0);
    CHECK(rep.symmetry_max_violation > 0.0);
  }
  SUBCASE("quadratic semilinear form fits p1 = 2") {
    const auto rep = audit_form(catalog::semilinear(1.0), 2, 50, 1.0);
    CHECK(std::abs(rep.fitted_p1 - 2.0) <= 0.05);
    CHECK(rep.growth_constant_p1 <= 1.0 + 1e-12);
    CHECK(rep.growth_constant_p1 > 0.5);
    const auto sq = audit_form(squared_velocity(), 3, 50, 1.0);
    CHECK(std::abs(sq.fitted_p1 - 2.0) <= 0.05);
  }
}
