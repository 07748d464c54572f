#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "dissipwave/cli.hpp"

namespace dissipwave {

namespace fs = std::filesystem;
using nlohmann::json;

void init_logging() {
  const char* env = std::getenv("DISSIPWAVE_LOG");
  if (!env || !*env) {
    spdlog::set_level(spdlog::level::info);
    return;
  }
  spdlog::set_level(spdlog::level::from_str(env));
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double auto_weight_A(const ExteriorGrid& g) {
  double rmin = std::numeric_limits<double>::infinity();
  for (std::size_t idx : g.fluid_cells()) rmin = std::min(rmin, norm(g.center(idx)));
  return 2.0 / rmin;
}

WeightD0 weight_for(const ExperimentConfig& c, const ExteriorGrid& g) {
  return WeightD0{g.dim(), c.weight_A ? *c.weight_A : auto_weight_A(g)};
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool damping_ok(const DampingAudit& a, bool with_b4) {
  return a.B1_pass && a.B2_pass && a.B3_pass && (!with_b4 || a.B4_pass);
}

json grid_json(const ExperimentConfig& c, const Problem& p) {
  const ExteriorGrid& g = *p.grid;
  return {{"dim", g.dim()},
          {"spacing", g.spacing()},
          {"extent", g.extent()},
          {"cells_per_axis", g.cells_per_axis()},
          {"fluid_cells", g.fluid_count()},
          {"obstacle", p.grid_spec.obstacle.describe()},
          {"lambda", c.lambda},
          {"dt", p.dt},
          {"cfl_limit", cfl_limit(g)},
          {"mu_max", p.mu_max}};
}

json hypothesis_json(const HypothesisReport& h) {
  return {{"H1_value", h.H1_value},           {"H2_value", h.H2_value},
          {"H2_quadrature", h.H2_quadrature}, {"H2_tail", h.H2_tail},
          {"H2_spatial_sup", h.H2_spatial_sup}, {"H3_pass", h.H3_pass},
          {"support_radius", h.support_radius}, {"M", h.M}};
}

json star_json(const StarShapeReport& s) {
  return {{"pass", s.pass},
          {"max_x_dot_sigma", s.max_x_dot_sigma},
          {"witness_x", {s.witness_x[0], s.witness_x[1], s.witness_x[2]}},
          {"witness_sigma", {s.witness_sigma[0], s.witness_sigma[1], s.witness_sigma[2]}}};
}

json monitors_json(const MonitorVerdicts& m) {
  json out = json::object();
  if (m.lyapunov) {
    out["lyapunov"] = {{"pass", m.lyapunov->pass()},
                       {"checked", m.lyapunov->checked},
                       {"violations", m.lyapunov->violations},
                       {"max_excess", m.lyapunov->max_excess},
                       {"tol", m.lyapunov->tol},
                       {"first_violation_t", m.lyapunov->first_violation_t}};
  }
  if (m.comparability) {
    out["comparability"] = {{"pass", m.comparability->pass()},
                            {"skipped", m.comparability->skipped},
                            {"ratio_min", m.comparability->ratio_min},
                            {"ratio_max", m.comparability->ratio_max},
                            {"spread", m.comparability->spread()},
                            {"band", m.comparability->band}};
  }
  if (m.rates) out["rates"] = {{"pass", *m.rates}};
  if (m.bootstrap) out["bootstrap"] = {{"pass", *m.bootstrap}};
  if (m.flux) out["flux"] = {{"pass", *m.flux}};
  out["failures"] = m.failures;
  out["pass"] = m.pass();
  return out;
}

void append_failure(std::string& list, const std::string& name) {
  if (!list.empty()) list += ",";
  list += name;
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

MonitorVerdicts evaluate_monitors(const ExperimentConfig& c, DiagnosticsSeries& series) {
  MonitorVerdicts v;
  if (c.lyapunov) {
    v.lyapunov = lyapunov_monitor(series, c.c_tol);
    if (!v.lyapunov->pass()) append_failure(v.failures, "lyapunov");
  }
  if (c.comparability) {
    v.comparability = comparability_monitor(series, c.band);
    if (!v.comparability->pass()) append_failure(v.failures, "comparability");
  }
  if (c.rates) {
    // Windows are given in unscaled time.
    const double lo = c.fit_t_lo / c.lambda;
    const double hi = std::min(c.fit_t_hi, c.t_final) / c.lambda;
    bool ok = true;
    for (const auto& [name, target] : {std::pair{std::string("L2_plus_Z"), c.alpha_L2Z}, std::pair{std::string("E"), c.alpha_E}}) {
      try {
        const ExponentFit fit = fit_decay_exponent(series, name, lo, hi, 1000, c.seed);
        series.fitted_exponents[name] = fit;
        if (!(fit.alpha <= target)) ok = false;
      } catch (const DecayError& e) {
        spdlog::warn("fit of {} failed: {}", name, e.what());
        ok = false;
      }
    }
    v.rates = ok;
    if (!ok) append_failure(v.failures, "rates");
  }
  if (c.bootstrap) {
    v.bootstrap = !series.H_running.empty() && series.H_running.back() < 0.5;
    if (!*v.bootstrap) append_failure(v.failures, "bootstrap");
  }
  if (c.flux) {
    v.flux = std::all_of(series.records.begin(), series.records.end(),
                         [](const FunctionalReport& r) { return r.boundary_flux <= 0.0; });
    if (!*v.flux) append_failure(v.failures, "flux");
  }
  return v;
}

ExperimentOutcome run_experiment(const ExperimentConfig& input, const fs::path& out_dir) {
  ExperimentOutcome out;
  json& summary = out.summary_json;
  summary["version"] = version_string();

  ExperimentConfig c;
  try {
    c = parse_config(to_text(input));
  } catch (const ConfigError& e) {
    out.exit_code = kExitConfig;
    out.diagnostic = e.what();
    spdlog::error("config error: {}", e.what());
    return out;
  }
  summary["config"] = to_text(c);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    out.exit_code = kExitConfig;
    out.diagnostic = "cannot create output directory " + out_dir.string() + ": " + ec.message();
    return out;
  }
  out.csv = out_dir / c.csv;
  out.summary = out_dir / c.summary;
  out.plot = out_dir / c.plot;

  const auto finish = [&](int code, const std::string& diagnostic) {
    out.exit_code = code;
    out.diagnostic = diagnostic;
    summary["exit_code"] = code;
    summary["diagnostic"] = diagnostic;
    try {
      write_json(summary, out.summary);
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
    }
  };

  Problem problem;
  try {
    problem = build_problem(c);
  } catch (const std::exception& e) {
    spdlog::error("problem setup failed: {}", e.what());
    finish(kExitConfig, e.what());
    return out;
  }
  const ExteriorGrid& g = *problem.grid;
  summary["grid"] = grid_json(c, problem);
  spdlog::info("grid {} cells per axis, {} fluid cells, dt {}, lambda {}", g.cells_per_axis(), g.fluid_count(),
               problem.dt, c.lambda);

  const HypothesisReport hyp =
      hypothesis_audit(g, problem.data, problem.damping, weight_for(c, g), c.M / c.lambda);
  summary["audits"] = {{"damping", to_json(problem.audit)},
                       {"star_shape", star_json(star_shape_audit(g))},
                       {"hypotheses", hypothesis_json(hyp)}};

  if (c.require_audits) {
    std::string failed;
    if (!damping_ok(problem.audit, c.lambda != 1.0)) failed += " damping";
    if (!hyp.H3_pass) failed += " H3";
    if (!failed.empty()) {
      spdlog::error("audits failed:{}", failed);
      finish(kExitConfig, "assumption audit failed:" + failed);
      return out;
    }
  }

  RunOptions opt = make_run_options(c);
  DiagnosticsSeries partial;
  opt.on_record = [&](const DiagnosticsSeries& s) {
    partial.append(s.records.back(), s.support_radius.back());
    spdlog::debug("t = {:.4f} E = {:.6e} Gt = {:.6e}", s.records.back().t, s.records.back().E,
                  s.records.back().G_tilde);
  };

  DiagnosticsSeries series;
  try {
    series = run_simulation(problem, opt);
  } catch (const SolverError& e) {
    spdlog::error("solver aborted: {}", e.what());
    summary["abort"] = {{"kind", dynamic_cast<const InstabilityError*>(&e)  ? "instability"
                                 : dynamic_cast<const SupportError*>(&e) ? "support"
                                                                         : "solver"},
                        {"records", partial.records.size()},
                        {"last_t", partial.records.empty() ? 0.0 : partial.records.back().t}};
    try {
      write_series_csv(partial, out.csv);
    } catch (const std::exception& w) {
      spdlog::error("{}", w.what());
    }
    finish(kExitSolver, e.what());
    return out;
  } catch (const std::exception& e) {
    spdlog::error("run failed: {}", e.what());
    finish(kExitSolver, e.what());
    return out;
  }

  const MonitorVerdicts verdicts = evaluate_monitors(c, series);
  summary["monitors"] = monitors_json(verdicts);
  json exps = json::object();
  for (const auto& [name, fit] : series.fitted_exponents) exps[name] = to_json(fit);
  summary["exponents"] = exps;
  summary["E0_measured"] = series.E0_measured;
  summary["H_final"] = series.H_running.empty() ? 0.0 : series.H_running.back();
  summary["records"] = series.records.size();
  summary["steps"] = series.steps;
  summary["final_hash"] = hex64(series.final_hash);
  summary["seconds"] = series.seconds;
  {
    double r_max = 0.0;
    for (double r : series.support_radius) r_max = std::max(r_max, r);
    summary["support_radius_max"] = r_max;
  }

  try {
    write_series_csv(series, out.csv);
    write_decay_svg(series, out.plot);
  } catch (const std::exception& e) {
    finish(kExitConfig, e.what());
    return out;
  }
  spdlog::info("run finished in {:.2f} s, {} records, monitors {}", series.seconds, series.records.size(),
               verdicts.pass() ? "pass" : "fail: " + verdicts.failures);
  out.series = std::move(series);
  finish(verdicts.pass() ? kExitOk : kExitMonitor, verdicts.pass() ? "" : "monitor failure: " + verdicts.failures);
  return out;
}

// --- sweeps ---------------------------------------------------------------

SweepPlan parse_sweep(const std::string& text) {
  SweepPlan plan;
  std::vector<std::string> base_lines;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::vector<ConfigIssue> issues;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    std::string line = hash == std::string::npos ? raw : raw.substr(0, hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line.compare(b, 6, "sweep.") != 0) {
      base_lines.push_back(raw);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line_no, line.substr(b), "expected 'sweep.<key> = v1, v2, ...'"});
      continue;
    }
    std::string key = line.substr(b + 6, eq - b - 6);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::vector<std::string> values;
    std::stringstream ss(line.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto ib = item.find_first_not_of(" \t\r");
      if (ib == std::string::npos) continue;
      values.push_back(item.substr(ib, item.find_last_not_of(" \t\r") - ib + 1));
    }
    const auto keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      issues.push_back({line_no, "sweep." + key, "unknown key"});
    } else if (values.empty()) {
      issues.push_back({line_no, "sweep." + key, "no values listed"});
    } else {
      plan.axes.emplace_back(key, values);
    }
  }
  if (!issues.empty()) throw ConfigParseError(std::move(issues));

  // Blank out base lines that set a swept key so line numbers stay meaningful.
  for (auto& l : base_lines) {
    const auto eq = l.find('=');
    if (eq == std::string::npos) continue;
    const auto b = l.find_first_not_of(" \t");
    std::string key = l.substr(b, eq - b);
    key.erase(key.find_last_not_of(" \t") + 1);
    for (const auto& [axis, values] : plan.axes) {
      if (axis == key) l.clear();
    }
  }
  for (const auto& l : base_lines) plan.base_text += l + '\n';
  return plan;
}

namespace {

std::vector<std::vector<std::size_t>> combinations(const SweepPlan& plan) {
  std::vector<std::vector<std::size_t>> out{{}};
  for (const auto& [key, values] : plan.axes) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& prefix : out) {
      for (std::size_t k = 0; k < values.size(); ++k) {
        auto e = prefix;
        e.push_back(k);
        next.push_back(std::move(e));
      }
    }
    out = std::move(next);
  }
  return out;
}

}  // namespace

std::vector<std::string> SweepPlan::entry_texts() const {
  std::vector<std::string> out;
  for (const auto& combo : combinations(*this)) {
    std::string t = base_text;
    for (std::size_t a = 0; a < axes.size(); ++a) t += axes[a].first + " = " + axes[a].second[combo[a]] + '\n';
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<std::string> SweepPlan::entry_labels() const {
  std::vector<std::string> out;
  for (const auto& combo : combinations(*this)) {
    std::string label;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      if (a) label += ' ';
      label += axes[a].first + "=" + axes[a].second[combo[a]];
    }
    out.push_back(label);
  }
  return out;
}

SweepOutcome run_sweep(const SweepPlan& plan, const fs::path& out_dir, int jobs,
                       std::optional<std::uint64_t> seed) {
  const auto texts = plan.entry_texts();
  const auto labels = plan.entry_labels();
  SweepOutcome result;
  result.entries.resize(texts.size());

  std::vector<std::optional<ExperimentConfig>> configs(texts.size());
  for (std::size_t k = 0; k < texts.size(); ++k) {
    try {
      configs[k] = parse_config(texts[k]);
      if (seed) configs[k]->seed = *seed;
    } catch (const ConfigError& e) {
      result.entries[k].exit_code = kExitConfig;
      result.entries[k].diagnostic = e.what();
      spdlog::error("sweep entry {} ({}): {}", k, labels[k], e.what());
    }
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < texts.size(); k = next++) {
      if (!configs[k]) continue;
      spdlog::info("sweep entry {} ({})", k, labels[k]);
      result.entries[k] = run_experiment(*configs[k], out_dir / ("entry_" + std::to_string(k)));
      result.entries[k].series.reset();  // keep memory flat across large sweeps
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(texts.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  result.table = out_dir / "sweep.csv";
  std::ofstream table(result.table);
  table << "entry,label,exit_code,lambda,delta,alpha_L2_plus_Z,alpha_E,E0_measured,H_final,comp_ratio_min,"
           "comp_ratio_max,lyapunov_violations,seconds\n";
  const auto num = [](const json& j, const char* key) -> std::string {
    if (!j.is_object() || !j.contains(key) || !j[key].is_number()) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", j[key].get<double>());
    return buf;
  };
  for (std::size_t k = 0; k < texts.size(); ++k) {
    const auto& e = result.entries[k];
    result.exit_code = std::max(result.exit_code, e.exit_code);
    const json& s = e.summary_json;
    const json empty = json::object();
    const json& mon = s.contains("monitors") ? s["monitors"] : empty;
    const json& exps = s.contains("exponents") ? s["exponents"] : empty;
    const json& comp = mon.contains("comparability") ? mon["comparability"] : empty;
    const json& lyap = mon.contains("lyapunov") ? mon["lyapunov"] : empty;
    table << k << ",\"" << labels[k] << "\"," << e.exit_code << ','
          << (configs[k] ? g17(configs[k]->lambda) : "") << ',' << (configs[k] ? g17(configs[k]->delta) : "") << ','
          << num(exps.contains("L2_plus_Z") ? exps["L2_plus_Z"] : empty, "alpha") << ','
          << num(exps.contains("E") ? exps["E"] : empty, "alpha") << ',' << num(s, "E0_measured") << ','
          << num(s, "H_final") << ',' << num(comp, "ratio_min") << ',' << num(comp, "ratio_max") << ','
          << (lyap.contains("violations") ? std::to_string(lyap["violations"].get<int>()) : "") << ','
          << num(s, "seconds") << '\n';
  }
  return result;
}

// --- audits ---------------------------------------------------------------

json run_audits(const ExperimentConfig& c, bool* all_pass) {
  json out;
  out["version"] = version_string();
  out["config"] = to_text(c);

  const GridSpec base_spec{c.dim, c.dx, c.extent, make_obstacle(c)};
  const ExteriorGrid base_grid = base_spec.build();
  const DampingModel model = make_damping_model(c);
  const DampingAudit base_audit = audit_damping(model, base_grid, c.audit_times, 1.0);
  out["damping_unscaled"] = to_json(base_audit);

  const Problem problem = build_problem(c);
  const ExteriorGrid& g = *problem.grid;
  out["damping"] = to_json(problem.audit);

  const StarShapeReport star = star_shape_audit(g);
  out["star_shape"] = star_json(star);

  const HypothesisReport hyp =
      hypothesis_audit(g, problem.data, problem.damping, weight_for(c, g), c.M / c.lambda);
  out["hypotheses"] = hypothesis_json(hyp);

  const PoincareReport poincare = poincare_audit(g, model, c.lambda, c.poincare_trials, c.seed);
  out["poincare"] = {{"C1_measured", poincare.C1_measured},
                     {"C_min", poincare.C_min},
                     {"C_proof", poincare.C_proof},
                     {"proof_constant_holds", poincare.proof_constant_holds},
                     {"trials_run", poincare.trials_run},
                     {"trials_skipped", poincare.trials_skipped}};

  const HardyReport hardy = hardy_gn_audit(g, weight_for(c, g), 20, c.seed);
  out["hardy_gn"] = {{"hardy_ratio_max", hardy.hardy_ratio_max},
                     {"gn_ratio_max", hardy.gn_ratio_max},
                     {"q", hardy.q},
                     {"r", hardy.r},
                     {"trials_run", hardy.trials_run}};

  const FormAudit form = audit_form(make_form(c), c.dim, 2000, 1.0, c.seed);
  out["form"] = {{"symmetry_max_violation", form.symmetry_max_violation},
                 {"growth_constant_p1", form.growth_constant_p1},
                 {"growth_constant_p2", form.growth_constant_p2},
                 {"derivative_constant_p1", form.derivative_constant_p1},
                 {"derivative_constant_p2", form.derivative_constant_p2},
                 {"fitted_p1", form.fitted_p1},
                 {"fitted_p2", form.fitted_p2},
                 {"samples", form.samples}};

  const WaveState ring = taylor_ring(g, problem.data, problem.damping, problem.form, problem.dt, problem.mu_max);
  const NonlinearBoundReport nb = nonlinear_bound_audit(ring, problem.form);
  out["nonlinear_bound"] = {{"skipped", nb.skipped}, {"Z", nb.Z}, {"ratio_A1", nb.ratio_A1}, {"ratio_A2", nb.ratio_A2}};

  const bool pass = damping_ok(base_audit, false) && damping_ok(problem.audit, c.lambda != 1.0) && star.pass &&
                    hyp.H3_pass && poincare.proof_constant_holds && poincare.C1_measured >= 0.25;
  out["pass"] = pass;
  if (all_pass) *all_pass = pass;
  return out;
}

}  // namespace dissipwave
