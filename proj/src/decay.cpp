#include "dissipwave/decay.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "dissipwave/summation.hpp"
#include "stencil.hpp"

namespace dissipwave {

void DiagnosticsSeries::append(const FunctionalReport& report, double support) {
  if (!records.empty() && !(report.t > records.back().t)) {
    throw DecayError("records must arrive in increasing time order");
  }
  double h = 0.0;
  if (!records.empty()) {
    h = H_running.back() + (1.0 + report.t) * report.Z_total * (report.t - records.back().t);
  }
  records.push_back(report);
  support_radius.push_back(support);
  H_running.push_back(h);
  E0_measured = std::max(E0_measured, (1.0 + report.t) * (report.v_norm_sq + report.Z_total));
}

double DiagnosticsSeries::startup_time() const {
  return std::max(static_cast<double>(history_depth) * dt, 1.0);
}

void accumulate_w(DiagnosticsSeries& series, const WaveState& state) {
  const Field& v = state.level(0);
  const double t = state.time();
  if (!series.w_started) {
    series.w_field.assign(v.size(), 0.0);
    series.w_last_v = v;
    series.w_time = t;
    series.w_started = true;
    return;
  }
  if (!(t > series.w_time)) throw DecayError("accumulate_w: state is not newer than the last one");
  if (v.size() != series.w_field.size()) throw DecayError("accumulate_w: grid changed");
  const double half_dt = 0.5 * (t - series.w_time);
  for (std::size_t k = 0; k < v.size(); ++k) {
    series.w_field[k] += half_dt * (series.w_last_v[k] + v[k]);
    series.w_last_v[k] = v[k];
  }
  series.w_time = t;
}

double grad_w_norm(const DiagnosticsSeries& series, const ExteriorGrid& grid) {
  if (!series.w_started) return 0.0;
  const std::size_t n = grid.size();
  const std::size_t ncomp = series.w_field.size() / n;
  double sum = 0.0;
  for (std::size_t c = 0; c < ncomp; ++c) {
    sum += detail::gradient_norm_sq(grid, series.w_field.data() + c * n);
  }
  return std::sqrt(sum);
}

LyapunovReport lyapunov_monitor(const DiagnosticsSeries& series, double c_tol) {
  LyapunovReport rep;
  const double t0 = series.startup_time();
  std::vector<std::size_t> idx;
  for (std::size_t k = 0; k < series.records.size(); ++k) {
    if (series.records[k].t >= t0) idx.push_back(k);
  }
  double z_scale = 0.0;
  for (std::size_t k : idx) z_scale = std::max(z_scale, series.records[k].Z.at(0));
  rep.tol = c_tol * (series.spacing * series.spacing + series.dt * series.dt) * z_scale;
  rep.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
    const auto& a = series.records[idx[j]];
    const auto& b = series.records[idx[j + 1]];
    const double lhs = (b.G_tilde - a.G_tilde) / (b.t - a.t) + series.b0 / 32.0 * a.Z.at(0);
    const double excess = lhs - rep.tol;
    rep.max_excess = std::max(rep.max_excess, excess);
    ++rep.checked;
    if (excess > 0.0) {
      if (rep.violations == 0) rep.first_violation_t = a.t;
      ++rep.violations;
    }
  }
  if (rep.checked == 0) rep.max_excess = 0.0;
  return rep;
}

ComparabilityReport comparability_monitor(const DiagnosticsSeries& series, double band) {
  ComparabilityReport rep;
  rep.band = band;
  const double t0 = series.startup_time();
  for (const auto& r : series.records) {
    if (r.t < t0) continue;
    const double denom = r.v_norm_sq + r.Z.at(0);
    if (!(denom > 0.0)) continue;
    const double ratio = r.G_tilde / denom;
    if (rep.skipped) {
      rep.ratio_min = rep.ratio_max = ratio;
      rep.skipped = false;
    } else {
      rep.ratio_min = std::min(rep.ratio_min, ratio);
      rep.ratio_max = std::max(rep.ratio_max, ratio);
    }
  }
  return rep;
}

HypothesisReport hypothesis_audit(const ExteriorGrid& grid, const InitialData& data,
                                  const DampingField& damping, const WeightD0& weight, double M,
                                  double t_h2, int samples) {
  HypothesisReport rep;
  const int d = grid.dim();
  const std::size_t n = grid.size();
  const double extent = grid.extent();

  CompensatedSum h1;
  double spatial = 0.0;
  const double mat = damping.model.matrix_mode == MatrixMode::kAnisotropic
                         ? 1.0 + std::max(0.0, damping.model.anisotropy)
                         : 1.0;
  for (std::size_t idx : grid.fluid_cells()) {
    const Point x = grid.center(idx);
    const double w = weight(x);
    const SmallMatrix B = damping.eval(d, 0.0, x);
    for (int i = 0; i < data.ncomp; ++i) {
      double s = data.v1[static_cast<std::size_t>(i) * n + idx];
      for (int j = 0; j < data.ncomp; ++j) s += B(i, j) * data.v0[static_cast<std::size_t>(j) * n + idx];
      h1 += (w * s) * (w * s);
    }
    if (norm(x) <= extent) spatial = std::max(spatial, std::abs(w * damping.spatial_factor(x)) * mat);
  }
  rep.H1_value = std::sqrt(h1.value() * grid.cell_volume());
  rep.H2_spatial_sup = spatial;

  // The time dependence factors out of B_lambda, so the sup over x is taken once.
  const double h = t_h2 / samples;
  CompensatedSum q;
  for (int k = 0; k < samples; ++k) q += std::abs(damping.time_derivative_factor((k + 0.5) * h));
  rep.H2_quadrature = spatial * q.value() * h;
  const TimeProfile p = damping.model.time_profile;
  const double lim = profile_limit(p);
  rep.H2_tail = std::isfinite(lim)
                    ? spatial * std::abs(profile_value(p, damping.lambda * t_h2) - lim)
                    : std::numeric_limits<double>::infinity();
  rep.H2_value = rep.H2_quadrature + rep.H2_tail;

  rep.support_radius = data.support_radius;
  rep.M = M;
  rep.H3_pass = data.support_radius <= M;
  return rep;
}

namespace {

double slope(const std::vector<double>& x, const std::vector<double>& y, const std::vector<std::size_t>& pick) {
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t k : pick) {
    mx += x[k];
    my += y[k];
  }
  mx /= static_cast<double>(pick.size());
  my /= static_cast<double>(pick.size());
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k : pick) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

ExponentFit fit_decay_exponent(const std::vector<double>& t, const std::vector<double>& f, double t_lo,
                               double t_hi, int resamples, std::uint64_t seed) {
  if (t.size() != f.size()) throw DecayError("fit: time and value counts differ");
  std::vector<double> x;
  std::vector<double> y;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] < t_lo || t[k] > t_hi) continue;
    if (!(f[k] > 0.0)) {
      std::ostringstream os;
      os << "fit: nonpositive value " << f[k] << " at t = " << t[k];
      throw DecayError(os.str());
    }
    x.push_back(std::log1p(t[k]));
    y.push_back(std::log(f[k]));
  }
  if (x.size() < 10) {
    std::ostringstream os;
    os << "fit: " << x.size() << " records in [" << t_lo << ", " << t_hi << "], need at least 10";
    throw DecayError(os.str());
  }
  ExponentFit fit;
  fit.points = static_cast<int>(x.size());
  fit.t_lo = t_lo;
  fit.t_hi = t_hi;
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), 0);
  fit.alpha = slope(x, y, all);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> sample(x.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& s : sample) s = pick(rng);
    const double a = slope(x, y, sample);
    if (std::isfinite(a)) boot.push_back(a);
  }
  if (boot.empty()) {
    fit.ci_lo = fit.ci_hi = fit.alpha;
  } else {
    std::sort(boot.begin(), boot.end());
    const auto at = [&](double q) {
      return boot[static_cast<std::size_t>(std::round(q * static_cast<double>(boot.size() - 1)))];
    };
    fit.ci_lo = at(0.025);
    fit.ci_hi = at(0.975);
  }
  return fit;
}

std::vector<double> record_times(const DiagnosticsSeries& series) {
  std::vector<double> t;
  t.reserve(series.records.size());
  for (const auto& r : series.records) t.push_back(r.t);
  return t;
}

std::vector<double> functional_values(const DiagnosticsSeries& series, const std::string& name) {
  std::vector<double> out;
  out.reserve(series.records.size());
  for (const auto& r : series.records) {
    if (name == "E") {
      out.push_back(r.E);
    } else if (name.size() == 2 && name[0] == 'Z' && std::isdigit(static_cast<unsigned char>(name[1]))) {
      const auto m = static_cast<std::size_t>(name[1] - '0');
      if (m >= r.Z.size()) throw DecayError("functional " + name + " was not recorded");
      out.push_back(r.Z[m]);
    } else if (name == "Z_total") {
      out.push_back(r.Z_total);
    } else if (name == "G") {
      out.push_back(r.G);
    } else if (name == "G_tilde") {
      out.push_back(r.G_tilde);
    } else if (name == "L2_plus_Z") {
      out.push_back(r.v_norm_sq + r.Z_total);
    } else {
      throw DecayError("unknown functional '" + name + "'");
    }
  }
  return out;
}

ExponentFit fit_decay_exponent(const DiagnosticsSeries& series, const std::string& name, double t_lo,
                               double t_hi, int resamples, std::uint64_t seed) {
  return fit_decay_exponent(record_times(series), functional_values(series, name), t_lo, t_hi, resamples,
                            seed);
}

double problem_C0(const Problem& problem, double C1, double t_max) {
  const DampingModel& m = problem.damping.model;
  const double r = m.R + 1.0;
  const std::vector<Point> far{{r, 0.0, 0.0}, {0.0, r, 0.0}, {r, r, 0.0}};
  C0Inputs in;
  in.b0 = m.b0;
  in.R = m.R;
  in.dim = problem.grid->dim();
  in.C1 = C1;
  in.B_sup = m.sup_norm(in.dim, far, std::max(t_max, 1.0));
  return compute_C0(in);
}

DiagnosticsSeries run_simulation(const Problem& problem, const RunOptions& opt) {
  const auto clock0 = std::chrono::steady_clock::now();
  if (opt.t_final < 0.0) throw std::invalid_argument("t_final must be nonnegative");
  if (opt.record_stride < 1) throw std::invalid_argument("record_stride must be at least 1");
  const ExteriorGrid& g = *problem.grid;
  const double dt = problem.dt;

  WeightD0 weight{g.dim(), opt.weight_A};
  if (!(weight.A > 0.0)) {
    double rmin = std::numeric_limits<double>::infinity();
    for (std::size_t idx : g.fluid_cells()) rmin = std::min(rmin, norm(g.center(idx)));
    weight.A = 2.0 / rmin;
  }
  const double C0 = opt.C0 > 0.0 ? opt.C0 : problem_C0(problem, opt.C1, problem.lambda * opt.t_final);
  FunctionalContext ctx = make_context(problem.damping, problem.form, C0);
  {
    double s = 0.0;
    for (std::size_t idx : g.fluid_cells()) {
      const Point x = g.center(idx);
      const SmallMatrix B = problem.damping.eval(g.dim(), 0.0, x);
      const std::size_t n = g.size();
      for (int i = 0; i < problem.data.ncomp; ++i) {
        double v = problem.data.v1[static_cast<std::size_t>(i) * n + idx];
        for (int j = 0; j < problem.data.ncomp; ++j) v += B(i, j) * problem.data.v0[static_cast<std::size_t>(j) * n + idx];
        const double w = weight(x) * v;
        s += w * w;
      }
    }
    ctx.weighted_data_norm = std::sqrt(s * g.cell_volume());
  }

  DiagnosticsSeries series;
  series.dim = g.dim();
  series.spacing = g.spacing();
  series.dt = dt;
  series.b0 = problem.damping.model.b0;

  // Relative to the initial peak, raised with sqrt(E) when the field grows.
  double E_start = 0.0;
  const auto threshold_for = [&](double E) {
    const double growth = E_start > 0.0 ? std::max(1.0, std::sqrt(E / E_start)) : 1.0;
    return opt.support_threshold_rel * problem.data.peak * growth;
  };
  const double M = problem.data.support_radius;
  const double edge = g.safe_radius();
  // The leapfrog stencil leaks a thin precursor a few cells ahead of the cone.
  const double slack = opt.support_slack_cells * g.spacing();
  const auto check_support = [&](double r, double t) {
    const double bound = M + (1.0 + opt.eps_speed) * std::max(t, 0.0) + slack;
    if (r > bound) {
      std::ostringstream os;
      os << "support radius " << r << " at t = " << t << " exceeds the cone bound " << bound;
      throw SupportError(os.str());
    }
    if (r >= edge) {
      std::ostringstream os;
      os << "support radius " << r << " at t = " << t << " reached the box edge " << g.extent();
      throw SupportError(os.str());
    }
  };

  {
    const WaveState ring = taylor_ring(g, problem.data, problem.damping, problem.form, dt, problem.mu_max);
    series.history_depth = ring.history_depth();
    FunctionalReport rep = evaluate_functionals(ring, ctx);
    rep.t = 0.0;
    E_start = rep.E;
    const double r = support_radius(ring, threshold_for(rep.E));
    check_support(r, 0.0);
    series.append(rep, r);
    if (opt.on_record) opt.on_record(series);
  }

  const long last = std::lround(std::ceil(opt.t_final / dt - 1e-9));
  if (last <= 0) {
    series.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
    return series;
  }

  WaveState s = start_state(g, problem.data, problem.damping, problem.form, dt, problem.mu_max);
  if (opt.track_w) accumulate_w(series, s);
  const long lead = s.center_back();
  while (s.step_index() - lead < last) {
    step(s, problem.damping, problem.form, dt);
    if (opt.after_step) opt.after_step(s);
    if (opt.track_w) accumulate_w(series, s);
    const long center = s.step_index() - lead;
    if (center <= 0 || !s.primed()) continue;
    if (center % opt.record_stride != 0 && center != last) continue;
    FunctionalReport rep = evaluate_functionals(s, ctx);
    const double r = support_radius(s, threshold_for(rep.E));
    check_support(r, rep.t);
    series.append(rep, r);
    if (opt.on_record) opt.on_record(series);
  }
  series.steps = s.step_index();
  series.final_hash = state_hash(s);
  series.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  return series;
}

}  // namespace dissipwave
