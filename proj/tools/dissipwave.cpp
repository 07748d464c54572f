// dissipwave: batch driver for the damped exterior wave experiments.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dissipwave/cli.hpp"

namespace fs = std::filesystem;
using namespace dissipwave;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed) {
  ExperimentConfig c = load_config(path);
  if (seed) c.seed = *seed;
  return c;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

int cmd_run(const std::string& config, const fs::path& out, std::optional<std::uint64_t> seed) {
  const ExperimentOutcome r = run_experiment(load(config, seed), out);
  if (r.exit_code != kExitOk) std::cerr << r.diagnostic << '\n';
  return r.exit_code;
}

int cmd_sweep(const std::string& config, const fs::path& out, int jobs, std::optional<std::uint64_t> seed) {
  const SweepOutcome r = run_sweep(parse_sweep(read_file(config)), out, jobs, seed);
  for (std::size_t k = 0; k < r.entries.size(); ++k) {
    if (r.entries[k].exit_code != kExitOk) std::cerr << "entry " << k << ": " << r.entries[k].diagnostic << '\n';
  }
  std::cout << r.table.string() << '\n';
  return r.exit_code;
}

int cmd_audit(const std::string& config, const fs::path& out, std::optional<std::uint64_t> seed) {
  bool pass = false;
  const auto j = run_audits(load(config, seed), &pass);
  write_json(j, out / "audit.json");
  std::cout << j.dump(2) << '\n';
  return pass ? kExitOk : kExitMonitor;
}

int cmd_equivariance(const std::string& config, const fs::path& out, int steps, double tol) {
  ExperimentConfig c = load_config(config);
  const double lambda = c.lambda == 1.0 ? 0.5 : c.lambda;
  c.lambda = 1.0;
  const Problem base = build_problem(c);
  const EquivarianceReport rep = equivariance_test(base, lambda, steps);
  const bool pass = rep.max_rel_diff <= tol;
  const nlohmann::json j{{"lambda", rep.lambda},
                         {"steps", rep.steps},
                         {"max_rel_diff", rep.max_rel_diff},
                         {"max_abs_diff", rep.max_abs_diff},
                         {"bitwise_equal", rep.bitwise_equal},
                         {"seconds", rep.seconds},
                         {"tolerance", tol},
                         {"pass", pass}};
  write_json(j, out / "equivariance.json");
  std::cout << j.dump(2) << '\n';
  return pass ? kExitOk : kExitMonitor;
}

int cmd_fit(const std::string& config, const fs::path& out, std::string csv) {
  const ExperimentConfig c = load_config(config);
  if (csv.empty()) csv = (out / c.csv).string();
  const CsvSeries s = read_series_csv(csv);
  const auto t = s.column("t");
  const auto E = s.column("E");
  const auto z = s.column("Z_total");
  const auto g = s.column("G_tilde");
  const auto r = s.column("comp_ratio");
  // ||v||^2 + Z0 = G~ / ratio, so ||v||^2 + Z = G~ / ratio + Z - Z0.
  const auto z0 = s.column("Z0");
  std::vector<double> l2z(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) l2z[k] = (r[k] > 0.0 ? g[k] / r[k] : 0.0) + z[k] - z0[k];

  // Same window as the run: unscaled times mapped onto the series clock.
  const double lo = c.fit_t_lo / c.lambda;
  const double hi = std::min(c.fit_t_hi, c.t_final) / c.lambda;
  nlohmann::json j{{"csv", csv}};
  bool pass = true;
  for (const auto& [name, values, target] :
       {std::tuple{"L2_plus_Z", l2z, c.alpha_L2Z}, std::tuple{"E", E, c.alpha_E}}) {
    try {
      const ExponentFit fit = fit_decay_exponent(t, values, lo, hi, 1000, c.seed);
      j[name] = to_json(fit);
      j[name]["target"] = target;
      j[name]["pass"] = fit.alpha <= target;
      pass = pass && fit.alpha <= target;
    } catch (const std::exception& e) {
      j[name] = {{"error", e.what()}};
      pass = false;
    }
  }
  j["pass"] = pass;
  write_json(j, out / "fit.json");
  std::cout << j.dump(2) << '\n';
  return pass ? kExitOk : kExitMonitor;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Finite-difference experiments for damped wave equations outside an obstacle"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::string config;
  std::string out = "out";
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  int steps = 500;
  double tol = 1e-12;
  std::string csv;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--seed", seed, "seed for randomized audits and bootstrap fits");
  };
  auto* run = app.add_subcommand("run", "run one experiment");
  common(run);
  auto* sweep = app.add_subcommand("sweep", "run every entry of a sweep file");
  common(sweep);
  sweep->add_option("--jobs", jobs, "parallel entries")->check(CLI::PositiveNumber);
  auto* audit = app.add_subcommand("audit", "assumption and inequality audits only");
  common(audit);
  auto* equiv = app.add_subcommand("equivariance", "solve-then-rescale against rescale-then-solve");
  common(equiv);
  equiv->add_option("--steps", steps, "time steps");
  equiv->add_option("--tol", tol, "relative tolerance");
  auto* fit = app.add_subcommand("fit", "re-fit decay exponents from a series CSV");
  common(fit);
  fit->add_option("--csv", csv, "series CSV (default: <out>/<output.csv>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, out, seed);
    if (*sweep) return cmd_sweep(config, out, jobs, seed);
    if (*audit) return cmd_audit(config, out, seed);
    if (*equiv) return cmd_equivariance(config, out, steps, tol);
    if (*fit) return cmd_fit(config, out, csv);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitSolver;
  }
  return kExitOk;
}
