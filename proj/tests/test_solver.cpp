#include <doctest.h>

#include <cmath>
#include <numbers>

#include "../src/stencil.hpp"
#include "dissipwave/solver.hpp"

using namespace dissipwave;

namespace {

DampingField no_damping() {
  DampingModel m;
  m.sign = 0.0;
  return {m, 1.0};
}

}  // namespace

TEST_CASE("cfl limit") {
  const auto g2 = build_exterior_grid(2, 0.1, 3.0, Obstacle(Ball{1.0}));
  const auto g3 = build_exterior_grid(3, 0.1, 1.5, Obstacle(Ball{1.0}));
  CHECK(cfl_limit(g2) == doctest::Approx(0.9 * 0.1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(cfl_limit(g2) == doctest::Approx(0.06364).epsilon(1e-4));
  CHECK(cfl_limit(g3) == doctest::Approx(0.05196).epsilon(1e-4));
  const auto half = build_exterior_grid(2, 0.05, 3.0, Obstacle(Ball{1.0}));
  CHECK(cfl_limit(half) == 0.5 * cfl_limit(g2));
}

TEST_CASE("initial data") {
  const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
  SUBCASE("bump normalized to the requested norm") {
    InitialDataSpec spec;
    spec.amplitude = 1e-2;
    spec.center = {3.0, 0.0, 0.0};
    const auto data = make_initial_data(g, spec);
    CHECK(std::abs(data.norm - 1e-2) <= 1e-10);
    CHECK(std::abs(data_norm(g, 2, data.v0, data.v1) - 1e-2) <= 1e-10);
    CHECK(data.support_radius == doctest::Approx(4.0));
  }
  SUBCASE("zero amplitude gives zero data") {
    InitialDataSpec spec;
    spec.amplitude = 0.0;
    const auto data = make_initial_data(g, spec);
    for (double v : data.v0) CHECK(v == 0.0);
    for (double v : data.v1) CHECK(v == 0.0);
  }
  SUBCASE("ring touching |x| = M reports M") {
    InitialDataSpec spec;
    spec.shape = DataShape::kRing;
    spec.support_radius = 5.0;
    spec.ring_width = 1.0;
    const auto data = make_initial_data(g, spec);
    CHECK(data.support_radius == 5.0);
    // No nonzero cell beyond M.
    for (std::size_t idx : g.fluid_cells()) {
      if (data.v0[idx] != 0.0) CHECK(norm(g.center(idx)) < 5.0);
    }
  }
  SUBCASE("data not vanishing on the obstacle are rejected") {
    InitialDataSpec spec;
    spec.center = {1.5, 0.0, 0.0};
    CHECK_THROWS_AS(make_initial_data(g, spec), std::invalid_argument);
  }
  SUBCASE("velocity data") {
    InitialDataSpec spec;
    spec.velocity_ratio = 1.0;
    const auto data = make_initial_data(g, spec);
    CHECK(std::abs(data.norm - 1e-2) <= 1e-10);
    CHECK(detail::l2_norm_sq(g, data.v1.data()) > 0.0);
  }
}

TEST_CASE("zero data stays zero") {
  const auto g = build_exterior_grid(2, 0.1, 6.0, Obstacle(Ball{1.0}));
  InitialDataSpec spec;
  spec.amplitude = 0.0;
  const auto data = make_initial_data(g, spec);
  const DampingField damping{DampingModel{}, 1.0};
  const auto form = catalog::quasilinear(0.05);
  const double dt = cfl_limit(g);
  auto s = start_state(g, data, damping, form, dt, 2);
  for (int k = 0; k < 50; ++k) step(s, damping, form, dt);
  for (int b = 0; b < 3; ++b)
    for (double v : s.level(b)) CHECK(v == 0.0);
}

TEST_CASE("step rejects dt beyond CFL and mismatched dt") {
  const auto g = build_exterior_grid(2, 0.1, 6.0, Obstacle(Ball{1.0}));
  const auto data = make_initial_data(g, InitialDataSpec{});
  const DampingField damping{DampingModel{}, 1.0};
  const double big = 1.01 * cfl_limit(g);
  auto s = start_state(g, data, damping, catalog::zero(), big, 2);
  CHECK_THROWS_AS(step(s, damping, catalog::zero(), big), SolverError);
  auto ok = start_state(g, data, damping, catalog::zero(), cfl_limit(g), 2);
  CHECK_THROWS_AS(step(ok, damping, catalog::zero(), 0.5 * cfl_limit(g)), SolverError);
}

TEST_CASE("free-wave leapfrog energy is conserved") {
  const auto g = build_exterior_grid(2, 0.1, 6.0, Obstacle(Ball{1.0}));
  InitialDataSpec spec;
  spec.center = {2.5, 0.5, 0.0};
  spec.velocity_ratio = 0.3;
  const auto data = make_initial_data(g, spec);
  const auto damping = no_damping();
  const auto form = catalog::zero();
  const double dt = cfl_limit(g);
  auto s = start_state(g, data, damping, form, dt, 2);
  const double e0 = leapfrog_energy(s);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    step(s, damping, form, dt);
    worst = std::max(worst, std::abs(leapfrog_energy(s) - e0) / e0);
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("damped leapfrog energy never increases") {
  const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
  InitialDataSpec spec;
  spec.center = {3.0, 0.0, 0.0};
  const auto data = make_initial_data(g, spec);
  for (auto profile : {TimeProfile::kConstant, TimeProfile::kExponential}) {
    DampingModel m;
    m.time_profile = profile;
    const DampingField damping{m, 1.0};
    const double dt = cfl_limit(g);
    auto s = start_state(g, data, damping, catalog::zero(), dt, 2);
    double prev = leapfrog_energy(s);
    int increases = 0;
    for (int k = 0; k < 400; ++k) {
      step(s, damping, catalog::zero(), dt);
      const double e = leapfrog_energy(s);
      if (e > prev * (1.0 + 1e-13)) ++increases;
      prev = e;
    }
    CHECK(increases == 0);
    CHECK(prev < 0.9 * leapfrog_energy(start_state(g, data, damping, catalog::zero(), dt, 2)));
  }
}

TEST_CASE("anisotropic damping also dissipates") {
  const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
  const auto data = make_initial_data(g, InitialDataSpec{});
  DampingModel m;
  m.matrix_mode = MatrixMode::kAnisotropic;
  m.anisotropy = 0.7;
  const DampingField damping{m, 1.0};
  const double dt = cfl_limit(g);
  auto s = start_state(g, data, damping, catalog::zero(), dt, 2);
  double prev = leapfrog_energy(s);
  for (int k = 0; k < 200; ++k) {
    step(s, damping, catalog::zero(), dt);
    const double e = leapfrog_energy(s);
    CHECK(e <= prev * (1.0 + 1e-13));
    prev = e;
  }
}

namespace {

// Standing mode of the box whose Dirichlet walls sit at the halo centers; a
// disk obstacle smaller than half a cell diagonal masks no cell.
double standing_mode_error(double dx) {
  const double extent = 1.0;
  const auto g = build_exterior_grid(2, dx, extent, Obstacle(Ball{0.01}));
  REQUIRE(g.fluid_count() == static_cast<std::size_t>(g.cells_per_axis() * g.cells_per_axis()));
  const double wall = extent + 0.5 * dx;
  const double k = std::numbers::pi / (2.0 * wall);
  const double omega = k * std::sqrt(2.0);
  auto mode = [&](const Point& x) {
    return std::sin(k * (x[0] + wall)) * std::sin(k * (x[1] + wall));
  };
  InitialData data;
  data.ncomp = 2;
  data.v0.assign(g.size() * 2, 0.0);
  data.v1.assign(g.size() * 2, 0.0);
  for (std::size_t idx : g.fluid_cells()) data.v0[idx] = mode(g.center(idx));
  data.peak = 1.0;
  const auto damping = no_damping();
  const double t_final = 1.0;
  const int steps = static_cast<int>(std::lround(t_final / (0.5 * dx)));
  const double dt = t_final / steps;
  auto s = start_state(g, data, damping, catalog::zero(), dt, 2);
  for (int n = 1; n < steps; ++n) step(s, damping, catalog::zero(), dt);
  REQUIRE(s.time() == doctest::Approx(t_final));
  double err = 0.0;
  for (std::size_t idx : g.fluid_cells()) {
    const double e = s.level(0)[idx] - std::cos(omega * t_final) * mode(g.center(idx));
    err += e * e;
  }
  return std::sqrt(err * g.cell_volume());
}

}  // namespace

TEST_CASE("separable standing mode converges at second order") {
  const double e1 = standing_mode_error(0.1);
  const double e2 = standing_mode_error(0.05);
  const double e3 = standing_mode_error(0.025);
  CHECK(e1 < 1e-2);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
  CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("synthetic state ring and support radius") {
  const auto g = build_exterior_grid(2, 0.1, 6.0, Obstacle(Ball{1.0}));
  auto s = make_synthetic_state(g, 0.05, 2, 10, [](double t, const Point& x) {
    const double r = norm(x);
    return std::array<double, 3>{r < 3.0 ? 1.0 + t : 0.0, 0.0, 0.0};
  });
  CHECK(s.primed());
  CHECK(s.step_index() == 16);
  CHECK(s.center_time() == doctest::Approx(13 * 0.05));
  CHECK(s.level(0)[g.fluid_cells().front()] == 0.0);
  const double r = support_radius(s, 1e-12);
  CHECK(r < 3.0);
  CHECK(r > 2.85);
}

TEST_CASE("large quasilinear data trip the instability detector") {
  const auto g = build_exterior_grid(2, 0.1, 8.0, Obstacle(Ball{1.0}));
  InitialDataSpec spec;
  spec.amplitude = 10.0;
  const auto data = make_initial_data(g, spec);
  const DampingField damping{DampingModel{}, 1.0};
  const auto form = catalog::quasilinear(0.05);
  const double dt = cfl_limit(g);
  auto s = start_state(g, data, damping, form, dt, 2);
  CHECK_THROWS_AS(
      [&] {
        for (int k = 0; k < 3000; ++k) step(s, damping, form, dt);
      }(),
      InstabilityError);
}
