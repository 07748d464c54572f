#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dissipwave/functionals.hpp"

using namespace dissipwave;

namespace {

double bump_at(const Point& x, const Point& c, double r) {
  Point y = x;
  for (int a = 0; a < 3; ++a) y[a] -= c[a];
  return bump_profile(norm(y) / r);
}

/// <f, -L f> assembled cell by cell from neighbor values, obstacle
/// neighbors replaced by the Dirichlet ghost; equals ||grad f||^2 by
/// summation by parts. Shares no code with the library reductions.
double face_gradient_oracle(const ExteriorGrid& g, const std::vector<double>& f) {
  const auto& st = g.strides();
  const double dx = g.spacing();
  long double sum = 0.0L;
  for (std::size_t idx = g.size(); idx-- > 0;) {
    if (!g.is_fluid(idx)) continue;
    long double lap = 0.0L;
    for (int a = 0; a < g.dim(); ++a) {
      for (int side : {-1, 1}) {
        const std::size_t nb = side > 0 ? idx + st[a] : idx - st[a];
        double val = 0.0;
        if (g.is_fluid(nb)) {
          val = f[nb];
        } else if (g.kind(nb) == CellKind::kObstacle) {
          const auto& link = g.ghost_links()[static_cast<std::size_t>(g.ghost_slot(idx))];
          val = link.ghost_factor[static_cast<std::size_t>(2 * a + (side > 0))] * f[idx];
        }
        lap += val - f[idx];
      }
    }
    sum -= f[idx] * lap;
  }
  return static_cast<double>(sum) / (dx * dx) * g.cell_volume();
}

FunctionalContext linear_context(const DampingModel& m = DampingModel{}, double lambda = 1.0) {
  return make_context(DampingField{m, lambda}, catalog::zero(), 128.0);
}

}  // namespace

TEST_CASE("central difference weights") {
  auto check = [](int order, std::vector<double> expect) {
    const auto w = central_weights(order);
    REQUIRE(w.size() == expect.size());
    for (std::size_t k = 0; k < w.size(); ++k) CHECK(w[k] == doctest::Approx(expect[k]).epsilon(1e-14));
  };
  check(0, {1.0});
  check(1, {-0.5, 0.0, 0.5});
  check(2, {1.0, -2.0, 1.0});
  check(3, {-0.5, 1.0, 0.0, -1.0, 0.5});
  check(4, {1.0, -4.0, 6.0, -4.0, 1.0});
}

TEST_CASE("C0 and bar C") {
  // 8 |B| b0 R^2 = 8 * 2 * 1 * 16 dominates 16 + 0.375 and d = 2.
  CHECK(compute_C0({1.0, 4.0, 2, 0.25, 2.0}) == 256.0);
  CHECK(compute_C0({1.0, 4.0, 2, 0.25, 0.01}) == doctest::Approx(16.375));
  CHECK(compute_C0({1e-3, 1.0, 3, 0.25, 1.0}) == 3.0);
  // C1 below the floor is raised to 1/4.
  CHECK(compute_C0({1.0, 4.0, 2, 0.0, 0.01}) == compute_C0({1.0, 4.0, 2, 0.25, 0.01}));
  CHECK(bar_C(64.0, 0.5, 1.0, 2) == doctest::Approx(128.0 + 0.75 + 1.0));
}

TEST_CASE("zero state gives zero functionals") {
  const auto g = build_exterior_grid(2, 0.1, 5.0, Obstacle(Ball{1.0}));
  const auto s = make_synthetic_state(g, 0.05, 2, 0, [](double, const Point&) {
    return std::array<double, 3>{0.0, 0.0, 0.0};
  });
  const auto ctx = make_context(DampingField{}, catalog::quasilinear(0.05), 128.0);
  const auto r = evaluate_functionals(s, ctx);
  CHECK(r.E == 0.0);
  for (double z : r.Z) CHECK(z == 0.0);
  CHECK(r.Z_total == 0.0);
  CHECK(r.G == 0.0);
  CHECK(r.G_tilde == 0.0);
  CHECK(r.boundary_flux == 0.0);
  CHECK(r.comparability_ratio == 0.0);
  const auto nb = nonlinear_bound_audit(s, catalog::semilinear(1.0));
  CHECK(nb.skipped);
}

TEST_CASE("functionals need a primed ring") {
  const auto g = build_exterior_grid(2, 0.1, 5.0, Obstacle(Ball{1.0}));
  const auto data = make_initial_data(g, InitialDataSpec{});
  const auto s = start_state(g, data, DampingField{}, catalog::zero(), cfl_limit(g), 2);
  CHECK_THROWS_AS(compute_energy(s), HistoryError);
  CHECK_THROWS_AS(compute_Zm(s, 0), HistoryError);
}

TEST_CASE("energy of a static bump matches the face-sum oracle") {
  const auto g = build_exterior_grid(2, 0.05, 5.0, Obstacle(Ball{1.0}));
  const Point c{1.8, 0.4, 0.0};
  const auto s = make_synthetic_state(g, 0.01, 2, 3, [&](double, const Point& x) {
    return std::array<double, 3>{bump_at(x, c, 1.5), 0.5 * bump_at(x, c, 1.5), 0.0};
  });
  std::vector<double> f0(g.size(), 0.0);
  std::vector<double> f1(g.size(), 0.0);
  for (std::size_t idx : g.fluid_cells()) {
    f0[idx] = bump_at(g.center(idx), c, 1.5);
    f1[idx] = 0.5 * f0[idx];
  }
  const double oracle = 0.5 * (face_gradient_oracle(g, f0) + face_gradient_oracle(g, f1));
  CHECK(oracle > 0.0);
  CHECK(std::abs(compute_energy(s) - oracle) <= 1e-12 * oracle);
}

TEST_CASE("energy covariance under rescaling by 2") {
  const double dx = 0.1;
  const double dt = 0.04;
  const auto g1 = build_exterior_grid(2, dx, 6.0, Obstacle(Ball{1.0}));
  const auto g2 = build_exterior_grid(2, dx * 0.5, 3.0, Obstacle(Ball{1.0}).rescaled(2.0));
  auto u = [](double t, const Point& x) {
    const double r = norm(x);
    const double val = std::cos(1.3 * t) * bump_profile((r - 2.5) / 1.2) * (1.0 + 0.3 * x[1]);
    return std::array<double, 3>{val, 0.2 * val, 0.0};
  };
  const auto su = make_synthetic_state(g1, dt, 2, 10, u);
  const auto sv = make_synthetic_state(g2, dt * 0.5, 2, 10, [&](double t, const Point& x) {
    auto val = u(2.0 * t, Point{2.0 * x[0], 2.0 * x[1], 0.0});
    for (double& q : val) q *= 0.5;
    return val;
  });
  CHECK(sv.center_time() * 2.0 == su.center_time());
  const double eu = compute_energy(su);
  const double ev = compute_energy(sv);
  CHECK(eu > 0.0);
  CHECK(std::abs(ev - 0.25 * eu) <= 1e-10 * eu);
}

TEST_CASE("Z0 sums mu_max + 1 temporal orders") {
  const auto g = build_exterior_grid(2, 0.1, 5.0, Obstacle(Ball{1.0}));
  const Point c{2.5, 0.0, 0.0};
  std::vector<double> prof(g.size(), 0.0);
  for (std::size_t idx : g.fluid_cells()) prof[idx] = bump_at(g.center(idx), c, 1.5);
  const double grad = face_gradient_oracle(g, prof);
  double l2 = 0.0;
  for (double v : prof) l2 += v * v;
  l2 *= g.cell_volume();
  const double dt = 1e-3;
  for (int mu_max = 0; mu_max <= 3; ++mu_max) {
    // v = e^t g(x): every time derivative equals v, so Z0 counts the orders.
    const auto s = make_synthetic_state(g, dt, mu_max, 0, [&](double t, const Point& x) {
      return std::array<double, 3>{std::exp(t) * bump_at(x, c, 1.5), 0.0, 0.0};
    });
    const double et = std::exp(2.0 * s.center_time());
    const double expect = (mu_max + 1) * et * (grad + l2);
    CHECK(compute_Zm(s, 0) == doctest::Approx(expect).epsilon(1e-4));
  }
}

TEST_CASE("Z_m structure") {
  const auto g = build_exterior_grid(2, 0.1, 5.0, Obstacle(Ball{1.0}));
  const auto s = make_synthetic_state(g, 0.02, 2, 4, [](double t, const Point& x) {
    const double b = bump_profile((norm(x) - 2.5) / 1.2);
    return std::array<double, 3>{std::sin(t + 0.3) * b, std::cos(2.0 * t) * b * x[0] / 3.0, 0.0};
  });
  const auto r = evaluate_functionals(s, linear_context());
  REQUIRE(r.Z.size() == 3);
  for (int m = 0; m <= 2; ++m) {
    CHECK(r.Z[static_cast<std::size_t>(m)] > 0.0);
    CHECK(r.Z[static_cast<std::size_t>(m)] == doctest::Approx(compute_Zm(s, m)).epsilon(1e-14));
  }
  CHECK(r.Z_total == doctest::Approx(r.Z[0] + r.Z[1] + r.Z[2]).epsilon(1e-15));
  CHECK(r.E > 0.0);
  CHECK(r.v_norm_sq > 0.0);
}

namespace {

// Separable mode of the obstacle-free box (tiny obstacle masks no cell).
struct ModeSetup {
  ExteriorGrid grid = build_exterior_grid(2, 0.05, 1.0, Obstacle(Ball{0.01}));
  double wall = 1.0 + 0.025;
  double k = std::numbers::pi / (2.0 * wall);
  double omega = k * std::sqrt(2.0);

  [[nodiscard]] double mode(const Point& x) const {
    return std::sin(k * (x[0] + wall)) * std::sin(k * (x[1] + wall));
  }
};

double z0_mode_error(const ModeSetup& m, double dt) {
  const auto s = make_synthetic_state(m.grid, dt, 2, 0, [&](double t, const Point& x) {
    return std::array<double, 3>{std::cos(m.omega * t) * m.mode(x), 0.0, 0.0};
  });
  std::vector<double> prof(m.grid.size(), 0.0);
  for (std::size_t idx : m.grid.fluid_cells()) prof[idx] = m.mode(m.grid.center(idx));
  const double grad = face_gradient_oracle(m.grid, prof);
  double l2 = 0.0;
  for (double v : prof) l2 += v * v;
  l2 *= m.grid.cell_volume();
  const double tc = s.center_time();
  auto amp = [&](int mu) {
    return std::pow(m.omega, mu) * std::cos(m.omega * tc + mu * std::numbers::pi / 2.0);
  };
  double oracle = 0.0;
  for (int mu = 0; mu <= 2; ++mu) oracle += amp(mu) * amp(mu) * grad + amp(mu + 1) * amp(mu + 1) * l2;
  return std::abs(compute_Zm(s, 0) - oracle) / oracle;
}

}  // namespace

TEST_CASE("Z0 of a standing mode against analytic time derivatives") {
  const ModeSetup m;
  const double e1 = z0_mode_error(m, 0.02);
  const double e2 = z0_mode_error(m, 0.01);
  CHECK(e1 < 1e-3);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("G tilde equals G without quasilinear terms") {
  const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
  const auto s = make_synthetic_state(g, 0.02, 2, 4, [](double t, const Point& x) {
    const double b = bump_profile((norm(x) - 3.0) / 2.0);
    return std::array<double, 3>{std::sin(t + 0.3) * b, std::cos(t) * b, 0.0};
  });
  for (const auto& form : {catalog::zero(), catalog::semilinear(1.0)}) {
    const auto ctx = make_context(DampingField{}, form, 128.0);
    const auto r = evaluate_functionals(s, ctx);
    CHECK(r.G_tilde == r.G);
    CHECK(compute_G(s, ctx) == r.G);
  }
}

TEST_CASE("G pieces against a direct evaluation") {
  // Static radial profile: only the mu = 0 gradient terms survive, and
  // G = C0/(2 lambda) Z0 + b0 (2d-1)/8 <v, B v>.
  const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
  const auto s = make_synthetic_state(g, 0.02, 2, 4, [](double, const Point& x) {
    return std::array<double, 3>{bump_profile((norm(x) - 4.0) / 2.0), 0.0, 0.0};
  });
  const DampingModel m;
  const auto ctx = linear_context(m);
  const auto r = evaluate_functionals(s, ctx);
  double bform = 0.0;
  for (std::size_t idx : g.fluid_cells()) {
    const double v = bump_profile((norm(g.center(idx)) - 4.0) / 2.0);
    bform += v * m.scalar(0.0, g.center(idx)) * v;
  }
  bform *= g.cell_volume();
  CHECK(r.damping_form == doctest::Approx(bform).epsilon(1e-12));
  CHECK(r.G == doctest::Approx(64.0 * r.Z[0] + 3.0 / 8.0 * bform).epsilon(1e-12));
  CHECK(r.G >= r.G_lower_bound);
}

TEST_CASE("quasilinear corrections are small for small data") {
  const auto g = build_exterior_grid(2, 0.1, 10.0, Obstacle(Ball{1.0}));
  InitialDataSpec spec;
  spec.amplitude = 1e-2;
  spec.velocity_ratio = 0.5;
  const auto data = make_initial_data(g, spec);
  const DampingField damping;
  const auto form = catalog::quasilinear(0.05);
  const double dt = cfl_limit(g);
  auto s = start_state(g, data, damping, form, dt, 2);
  for (int k = 0; k < 100; ++k) step(s, damping, form, dt);
  const auto ctx = make_context(damping, form, 128.0);
  const auto r = evaluate_functionals(s, ctx);
  CHECK(r.G > 0.0);
  CHECK(r.G_tilde != r.G);
  CHECK(std::abs(r.G_tilde - r.G) / r.G <= 0.05);
}

TEST_CASE("boundary flux") {
  SUBCASE("nonpositive on star-shaped obstacles") {
    for (const Obstacle& obs : {Obstacle(Ball{1.0}), Obstacle(StarPolygon{})}) {
      const auto g = build_exterior_grid(2, 0.05, 5.0, obs);
      const auto s = make_synthetic_state(g, 0.02, 2, 1, [](double t, const Point& x) {
        const double b = bump_profile(norm(x) / 3.5);
        return std::array<double, 3>{std::cos(t) * b * (1.0 + x[0]), std::sin(2 * t) * b * x[1], 0.0};
      });
      const double flux = boundary_flux(s, MultiplierField{});
      CHECK(flux < 0.0);
    }
  }
  SUBCASE("radial profile on the disk") {
    // v = (r - 1) near the unit disk: |sigma . grad v| = 1 and h . sigma = -b0,
    // so the flux approaches -2 pi b0 as the crossing fractions average out.
    const auto g = build_exterior_grid(2, 0.025, 3.0, Obstacle(Ball{1.0}));
    const auto s = make_synthetic_state(g, 0.02, 0, 0, [](double, const Point& x) {
      const double r = norm(x);
      return std::array<double, 3>{(r - 1.0) * (1.0 - smoothstep5((r - 1.5) / 1.0)), 0.0, 0.0};
    });
    const double flux = boundary_flux(s, MultiplierField{});
    CHECK(flux < 0.0);
    CHECK(flux == doctest::Approx(-2.0 * std::numbers::pi).epsilon(0.35));
  }
  SUBCASE("zero before the data reach the obstacle") {
    const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
    InitialDataSpec spec;
    spec.center = {5.0, 0.0, 0.0};
    const auto data = make_initial_data(g, spec);
    const DampingField damping;
    const double dt = cfl_limit(g);
    auto s = start_state(g, data, damping, catalog::zero(), dt, 2);
    for (int k = 0; k < 20; ++k) step(s, damping, catalog::zero(), dt);
    CHECK(s.center_time() < 2.0);
    CHECK(boundary_flux(s, MultiplierField{}) == 0.0);
  }
}

TEST_CASE("poincare audit") {
  const auto g = build_exterior_grid(2, 0.1, 12.0, Obstacle(Ball{1.0}));
  const DampingModel m;
  CHECK(poincare_proof_constant(1.0, 4.0) == doctest::Approx(901.0).epsilon(1e-12));
  const auto rep = poincare_audit(g, m, 1.0, 100);
  CHECK(rep.trials_run + rep.trials_skipped == 100);
  CHECK(rep.trials_run >= 90);
  CHECK(rep.proof_constant_holds);
  CHECK(rep.C1_measured >= 0.25);
  CHECK(std::isfinite(rep.C1_measured));
  int far = 0;
  for (const auto& tr : rep.trials) {
    CHECK(tr.C <= rep.C_proof);
    if (tr.far_field) {
      ++far;
      CHECK(tr.C <= 1.0 / m.b0 + 1e-12);
    }
  }
  CHECK(far > 0);
}

TEST_CASE("poincare audit on a rescaled domain") {
  const auto g = build_exterior_grid(2, 0.05, 6.0, Obstacle(Ball{1.0}).rescaled(2.0));
  const auto rep = poincare_audit(g, DampingModel{}, 0.5, 40);
  CHECK(rep.proof_constant_holds);
  CHECK(rep.trials_run > 0);
}

TEST_CASE("hardy and Gagliardo-Nirenberg audit") {
  SUBCASE("3D Hardy ratio under the whole-space constant") {
    const auto g = build_exterior_grid(3, 0.1, 3.0, Obstacle(Ball{0.5}));
    const auto rep = hardy_gn_audit(g, WeightD0{3, 2.0}, 6);
    CHECK(rep.trials_run == 6);
    CHECK(rep.hardy_ratio_max > 0.0);
    CHECK(rep.hardy_ratio_max <= 2.0 * 1.1);
    CHECK(rep.r == doctest::Approx(6.0));
    CHECK(std::isfinite(rep.gn_ratio_max));
  }
  SUBCASE("2D log weight stays finite and refines stably") {
    const auto coarse = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
    const auto fine = build_exterior_grid(2, 0.05, 8.0, Obstacle(Ball{1.0}));
    const WeightD0 w{2, 2.0};
    const auto a = hardy_gn_audit(coarse, w, 8);
    const auto b = hardy_gn_audit(fine, w, 8);
    CHECK(std::isfinite(a.hardy_ratio_max));
    CHECK(a.hardy_ratio_max > 0.0);
    CHECK(b.hardy_ratio_max / a.hardy_ratio_max == doctest::Approx(1.0).epsilon(0.5));
    CHECK(b.gn_ratio_max / a.gn_ratio_max == doctest::Approx(1.0).epsilon(0.5));
    // The L1 Sobolev constant in the plane is 1/(2 sqrt(pi)).
    CHECK(a.gn_ratio_max <= 1.05 / (2.0 * std::sqrt(std::numbers::pi)));
  }
}

TEST_CASE("nonlinear bound audit") {
  SUBCASE("quadratic semilinear ratio is amplitude invariant") {
    const auto g = build_exterior_grid(2, 0.1, 6.0, Obstacle(Ball{1.0}));
    auto field = [](double amp) {
      return [amp](double t, const Point& x) {
        const double b = bump_profile((norm(x) - 3.0) / 1.5);
        return std::array<double, 3>{amp * std::sin(t + 0.2) * b, amp * std::cos(1.5 * t) * b * x[1], 0.0};
      };
    };
    const auto s1 = make_synthetic_state(g, 0.03, 2, 5, field(1e-2));
    const auto s2 = make_synthetic_state(g, 0.03, 2, 5, field(2e-2));
    const auto form = catalog::semilinear(1.0);
    const auto a = nonlinear_bound_audit(s1, form);
    const auto b = nonlinear_bound_audit(s2, form);
    CHECK(a.ratio_A1 > 0.0);
    CHECK(std::abs(a.ratio_A1 - b.ratio_A1) <= 1e-10 * a.ratio_A1);
  }
  SUBCASE("quasilinear ratio is stable under refinement") {
    auto ratio = [](double dx) {
      const auto g = build_exterior_grid(2, dx, 6.0, Obstacle(Ball{1.0}));
      const auto s = make_synthetic_state(g, dx * 0.5, 2, 5, [](double t, const Point& x) {
        const double b = bump_profile((norm(x) - 3.0) / 1.5);
        return std::array<double, 3>{1e-2 * std::sin(t + 0.2) * b, 1e-2 * std::cos(t) * b, 0.0};
      });
      return nonlinear_bound_audit(s, catalog::quasilinear(0.05)).ratio_A2;
    };
    const double a = ratio(0.1);
    const double b = ratio(0.05);
    CHECK(std::isfinite(a));
    CHECK(a > 0.0);
    CHECK(b / a <= 2.0);
    CHECK(b / a >= 0.5);
  }
}
