#include <doctest.h>

#include <cmath>

#include "dissipwave/coefficients.hpp"

using namespace dissipwave;

TEST_CASE("damping is the identity far out and zero near the obstacle") {
  DampingModel m;  // b0 = 1, R = 4, cutoff_inner = 2
  const SmallMatrix far = eval_damping(m, 2, 0.0, {8.0, 0.0, 0.0});
  CHECK(far.isApprox(SmallMatrix::Identity(2, 2)));
  const SmallMatrix near = eval_damping(m, 2, 0.0, {1.05, 0.0, 0.0});
  CHECK(near.isZero(0.0));
}

TEST_CASE("exponential profile falls from 2 b0 toward b0") {
  DampingModel m;
  m.time_profile = TimeProfile::kExponential;
  const Point x{6.0, 0.0, 0.0};
  CHECK(eval_damping(m, 2, 0.0, x)(0, 0) == doctest::Approx(2.0));
  const double late = eval_damping(m, 2, 40.0, x)(0, 0);
  CHECK(late >= 1.0);
  CHECK(late == doctest::Approx(1.0).epsilon(1e-12));
  for (double t = 0.0; t < 20.0; t += 0.5) {
    CHECK(eval_damping(m, 2, t + 0.5, x)(0, 0) <= eval_damping(m, 2, t, x)(0, 0));
  }
}

TEST_CASE("smoothstep cutoff is C1 with the expected derivative bound") {
  double max_slope = 0.0;
  for (int k = 0; k <= 1000; ++k) max_slope = std::max(max_slope, smoothstep5_derivative(k / 1000.0));
  CHECK(max_slope == doctest::Approx(1.875));
  CHECK(smoothstep5(0.0) == 0.0);
  CHECK(smoothstep5(1.0) == 1.0);
}

TEST_CASE("damping audits") {
  const auto grid = build_exterior_grid(2, 0.25, 8.0, Obstacle(Ball{1.0}));
  const std::vector<double> times{0.0, 0.5, 1.0, 3.0, 10.0};

  SUBCASE("constant profile passes (B1)-(B3)") {
    const auto a = audit_damping(DampingModel{}, grid, times);
    CHECK(a.B1_pass);
    CHECK(a.B2_pass);
    CHECK(a.B3_pass);
    CHECK(a.B2_witness.eigenvalue == doctest::Approx(0.0));
  }
  SUBCASE("admissible time-dependent and anisotropic models pass") {
    for (auto p : {TimeProfile::kExponential, TimeProfile::kRational}) {
      DampingModel m;
      m.time_profile = p;
      m.matrix_mode = MatrixMode::kAnisotropic;
      m.anisotropy = 0.5;
      const auto a = audit_damping(m, grid, times);
      CHECK(a.B1_pass);
      CHECK(a.B2_pass);
      CHECK(a.B3_pass);
    }
  }
  SUBCASE("increasing profile fails (B2) with a positive witness") {
    DampingModel m;
    m.time_profile = TimeProfile::kIncreasing;
    const auto a = audit_damping(m, grid, times);
    CHECK(a.B1_pass);
    CHECK_FALSE(a.B2_pass);
    CHECK(a.B2_witness.eigenvalue == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(norm(a.B2_witness.x) >= 4.0);
  }
  SUBCASE("negated damping fails (B1)") {
    DampingModel m;
    m.sign = -1.0;
    CHECK_FALSE(audit_damping(m, grid, times).B1_pass);
  }
  SUBCASE("lambda = 2 rescale: (B3) bound 2 b0 beyond R/2 and (B4) ratios") {
    const auto g2 = build_exterior_grid(2, 0.125, 4.0, Obstacle(Ball{1.0}).rescaled(2.0));
    DampingModel m;
    m.time_profile = TimeProfile::kExponential;
    const auto a = audit_damping(m, g2, times, 2.0);
    CHECK(a.B1_pass);
    CHECK(a.B2_pass);
    CHECK(a.B3_pass);
    CHECK(a.B3_witness.eigenvalue >= 2.0 * (1.0 - 1e-12));
    CHECK(a.B4_pass);
    REQUIRE(a.B4_table.size() == 10);
    for (const auto& e : a.B4_table) CHECK(e.ratio <= 1.0 + 1e-8);
  }
}

TEST_CASE("rescaled damping field matches lambda B(lambda t, lambda x)") {
  DampingModel m;
  m.time_profile = TimeProfile::kRational;
  const DampingField f{m, 0.5};
  const Point x{3.0, 5.0, 0.0};
  const double direct = 0.5 * m.scalar(0.5 * 2.0, {1.5, 2.5, 0.0});
  CHECK(f.scalar(2.0, x) == doctest::Approx(direct).epsilon(1e-15));
  CHECK(f.eval(2, 2.0, x)(1, 1) == doctest::Approx(direct).epsilon(1e-15));
}

TEST_CASE("multiplier values") {
  const MultiplierField field{1.0, 4.0, 1.0};
  const auto inner = eval_multiplier(field, 2, {2.0, 0.0, 0.0});
  CHECK(inner.h[0] == 2.0);
  CHECK(inner.h[1] == 0.0);
  CHECK(inner.div_h == 2.0);
  const auto outer = eval_multiplier(field, 2, {8.0, 0.0, 0.0});
  CHECK(outer.h[0] == doctest::Approx(4.0));
  CHECK(outer.div_h == doctest::Approx(0.5));
  CHECK(outer.grad_h.trace() == doctest::Approx(outer.div_h));
  const auto big = eval_multiplier(field, 2, {3e5, 4e5, 0.0});
  CHECK(norm(big.h) == doctest::Approx(4.0));
  CHECK_THROWS(eval_multiplier(field, 2, {0.0, 0.0, 0.0}));
}

TEST_CASE("multiplier kink: continuity and r phi' identities") {
  for (double lambda : {1.0, 0.5, 0.25, 2.0}) {
    const MultiplierField f{1.5, 4.0, lambda};
    const double k = f.kink();
    CHECK(f.phi(k) == doctest::Approx(f.phi(k * (1.0 + 1e-12))));
    CHECK(f.phi_prime(k) == 0.0);
    for (double r : {0.3 * k, 0.9 * k}) CHECK(r * f.phi_prime(r) == 0.0);
    for (double r : {1.1 * k, 3.0 * k}) {
      CHECK(r * f.phi_prime(r) == doctest::Approx(-f.phi(r)));
      CHECK(r * f.phi(r) == doctest::Approx(k * f.phi(k)));
    }
    CHECK(norm(f.h({10.0 * k, 0.0, 0.0})) == doctest::Approx(f.sup_norm()));
  }
}

TEST_CASE("multiplier rescaling covariance h_lambda(x) = h_1(lambda x) / lambda") {
  const MultiplierField one{1.0, 4.0, 1.0};
  for (double lambda : {0.5, 0.25}) {
    const MultiplierField scaled{1.0, 4.0, lambda};
    for (const Point x : {Point{1.0, 2.0, 0.0}, Point{-9.0, 3.0, 0.0}, Point{20.0, -1.0, 0.0}}) {
      const Point hl = scaled.h(x);
      const Point h1 = one.h({lambda * x[0], lambda * x[1], 0.0});
      for (int i = 0; i < 2; ++i) CHECK(std::abs(hl[i] - h1[i] / lambda) <= 1e-12);
    }
  }
}

TEST_CASE("weight d0") {
  CHECK(eval_weight_d0({3, 2.0}, {3.0, 0.0, 0.0}) == 3.0);
  CHECK(eval_weight_d0({2, 2.0}, {1.0, 0.0, 0.0}) == doctest::Approx(0.6931471805599453));
  const auto grid = build_exterior_grid(2, 0.1, 4.0, Obstacle(Ball{1.0}));
  CHECK_THROWS_AS(WeightD0({2, 1.0}).validate(grid), ConfigError);
  CHECK_NOTHROW(WeightD0({2, 2.0}).validate(grid));
}
