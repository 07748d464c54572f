#include "dissipwave/rescale.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace dissipwave {

bool is_power_of_two(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) return false;
  int exp = 0;
  return std::frexp(lambda, &exp) == 0.5;
}

namespace {

void require_power_of_two(double lambda) {
  if (!is_power_of_two(lambda)) {
    std::ostringstream msg;
    msg << "lambda = " << lambda << " is not a power of two";
    throw RescaleError(msg.str());
  }
}

void require_image(const ExteriorGrid& source, double lambda, const ExteriorGrid& target) {
  const bool same_shape = source.dim() == target.dim() &&
                          source.cells_per_axis() == target.cells_per_axis() &&
                          source.spacing() / lambda == target.spacing() &&
                          source.extent() / lambda == target.extent();
  if (!same_shape || source.kinds() != target.kinds()) {
    throw RescaleError("target grid is not the image of the source grid under x -> x / lambda");
  }
}

}  // namespace

ExteriorGrid GridSpec::build() const { return build_exterior_grid(dim, spacing, extent, obstacle); }

GridSpec GridSpec::rescaled(double lambda) const {
  GridSpec out = *this;
  out.spacing = spacing / lambda;
  out.extent = extent / lambda;
  out.obstacle = obstacle.rescaled(lambda);
  return out;
}

RescaleMap make_rescale_map(const GridSpec& source, double lambda) {
  require_power_of_two(lambda);
  return RescaleMap{lambda, source, source.rescaled(lambda)};
}

WaveState rescale_state(const WaveState& u, double lambda, const ExteriorGrid& target) {
  require_power_of_two(lambda);
  require_image(u.grid(), lambda, target);
  const double inv = 1.0 / lambda;
  WaveState v(target, u.dt() / lambda, u.mu_max());
  const int stored = u.levels_stored();
  std::vector<Field> levels;
  levels.reserve(static_cast<std::size_t>(stored));
  for (int back = stored - 1; back >= 0; --back) {
    Field f = u.level(back);
    for (double& x : f) x *= inv;
    levels.push_back(std::move(f));
  }
  v.set_levels(u.step_index() - stored + 1, std::move(levels));
  v.set_window(u.window());
  for (int c = 0; c < u.ncomp(); ++c) v.set_component_active(c, u.component_active(c));
  v.reference_peak = u.reference_peak * inv;
  return v;
}

InitialData rescale_data(const InitialData& u, double lambda, const ExteriorGrid& target) {
  require_power_of_two(lambda);
  if (u.v0.size() != target.size() * static_cast<std::size_t>(u.ncomp)) {
    throw RescaleError("data do not match the target grid");
  }
  const double inv = 1.0 / lambda;
  InitialData v = u;
  for (double& x : v.v0) x *= inv;
  v.support_radius = u.support_radius * inv;
  v.norm = data_norm(target, v.ncomp, v.v0, v.v1);
  double peak = 0.0;
  for (std::size_t k = 0; k < v.v0.size(); ++k) {
    peak = std::max({peak, std::abs(v.v0[k]), std::abs(v.v1[k])});
  }
  v.peak = peak;
  return v;
}

double activation_radius(const DampingField& damping) { return damping.model.R / damping.lambda; }

double far_field_bound(const DampingField& damping) { return damping.lambda * damping.model.b0; }

namespace {

void check_audit(const DampingAudit& a) {
  std::ostringstream err;
  if (!a.B1_pass) err << "(B1) fails: eigenvalue " << a.B1_witness.eigenvalue << "; ";
  if (!a.B2_pass) err << "(B2) fails: d_t B eigenvalue " << a.B2_witness.eigenvalue << "; ";
  if (!a.B3_pass) err << "(B3) fails: far-field eigenvalue " << a.B3_witness.eigenvalue << "; ";
  if (!a.B4_pass) err << "(B4) fails; ";
  const std::string msg = err.str();
  if (!msg.empty()) throw ConfigError("damping audit at lambda = " + std::to_string(a.lambda) + ": " + msg);
}

}  // namespace

Problem make_problem(const GridSpec& grid, const DampingModel& model, const NonlinearForm& form,
                     const InitialDataSpec& data, double dt, int mu_max,
                     const std::vector<double>& audit_times) {
  Problem p;
  p.grid_spec = grid;
  p.grid = std::make_shared<const ExteriorGrid>(grid.build());
  p.damping = DampingField{model, 1.0};
  p.form = form;
  p.data = make_initial_data(*p.grid, data);
  p.dt = dt > 0.0 ? dt : cfl_limit(*p.grid);
  p.mu_max = mu_max;
  p.lambda = 1.0;
  p.audit = audit_damping(model, *p.grid, audit_times, 1.0);
  return p;
}

Problem rescale_problem(const Problem& base, double lambda, const std::vector<double>& audit_times,
                        bool require_audits) {
  require_power_of_two(lambda);
  Problem p;
  p.grid_spec = base.grid_spec.rescaled(lambda);
  p.grid = std::make_shared<const ExteriorGrid>(p.grid_spec.build());
  require_image(*base.grid, lambda, *p.grid);
  p.lambda = base.lambda * lambda;
  p.damping = DampingField{base.damping.model, base.damping.lambda * lambda};
  p.form = rescale_form(base.form, lambda);
  p.data = rescale_data(base.data, lambda, *p.grid);
  p.dt = base.dt / lambda;
  p.mu_max = base.mu_max;
  p.audit = audit_damping(p.damping.model, *p.grid, audit_times, p.damping.lambda);
  if (require_audits) check_audit(p.audit);
  return p;
}

EquivarianceReport equivariance_test(const Problem& base, double lambda, int steps) {
  const auto t0 = std::chrono::steady_clock::now();
  EquivarianceReport rep;
  rep.steps = steps;
  rep.lambda = lambda;
  const Problem scaled = rescale_problem(base, lambda, {0.0}, false);

  WaveState u = start_state(*base.grid, base.data, base.damping, base.form, base.dt, base.mu_max);
  for (int k = 0; k < steps; ++k) step(u, base.damping, base.form, base.dt);
  const WaveState mapped = rescale_state(u, lambda, *scaled.grid);

  WaveState v = start_state(*scaled.grid, scaled.data, scaled.damping, scaled.form, scaled.dt,
                            scaled.mu_max);
  for (int k = 0; k < steps; ++k) step(v, scaled.damping, scaled.form, scaled.dt);

  if (v.step_index() != mapped.step_index() || v.levels_stored() != mapped.levels_stored()) {
    throw RescaleError("equivariance: histories do not line up");
  }
  bool equal = true;
  double peak = 0.0;
  double diff = 0.0;
  for (int back = 0; back < v.levels_stored(); ++back) {
    const Field& a = mapped.level(back);
    const Field& b = v.level(back);
    for (std::size_t k = 0; k < a.size(); ++k) {
      peak = std::max(peak, std::abs(b[k]));
      diff = std::max(diff, std::abs(a[k] - b[k]));
      if (a[k] != b[k]) equal = false;
    }
  }
  rep.max_abs_diff = diff;
  rep.max_rel_diff = peak > 0.0 ? diff / peak : diff;
  rep.bitwise_equal = equal;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace dissipwave
