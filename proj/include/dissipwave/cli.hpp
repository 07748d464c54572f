#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dissipwave/coefficients.hpp"
#include "dissipwave/decay.hpp"
#include "dissipwave/rescale.hpp"

namespace dissipwave {

std::string version_string();

/// Sets the log level from DISSIPWAVE_LOG (trace, debug, info, warn, error, off).
void init_logging();

struct ExperimentConfig {
  // geometry
  int dim = 2;
  double dx = 0.1;
  double extent = 20.0;
  std::string obstacle = "ball";
  double radius = 1.0;  // ball or crescent radius
  int star_points = 4;
  double star_outer = 1.5;
  double star_inner = 0.75;
  double bite_x = 1.5;
  double bite_radius = 1.2;

  // damping
  double b0 = 1.0;
  double R = 4.0;
  std::optional<double> cutoff_inner;
  std::string profile = "constant";
  std::string matrix_mode = "scalar";
  double anisotropy = 0.0;
  double sign = 1.0;

  // nonlinearity
  std::string form = "zero";
  double kappa = 1.0;
  double gamma = 0.05;

  // data
  double delta = 1e-2;
  double M = 4.5;
  std::string shape = "bump";
  double center_x = 3.0;
  double center_y = 0.0;
  double center_z = 0.0;
  double bump_radius = 1.5;
  double ring_width = 1.0;
  double velocity_ratio = 0.0;
  std::uint64_t seed = 1;

  // run
  std::optional<double> dt;  // time step of the unscaled problem
  double t_final = 20.0;
  int record_stride = 16;
  int mu_max = 2;

  // rescale
  double lambda = 1.0;

  // monitor
  bool lyapunov = true;
  double c_tol = 5.0;
  bool comparability = true;
  double band = 10.0;
  bool rates = false;
  double fit_t_lo = 10.0;
  double fit_t_hi = 200.0;
  double alpha_L2Z = -0.8;
  double alpha_E = -1.6;
  bool bootstrap = true;
  bool flux = true;
  double support_threshold = 1e-6;
  double eps_speed = 0.05;
  double C1 = 0.25;
  bool require_audits = true;
  std::vector<double> audit_times{0.0, 1.0, 5.0};
  int poincare_trials = 100;
  bool track_w = false;

  // weight
  std::optional<double> weight_A;

  // output
  std::string csv = "series.csv";
  std::string summary = "summary.json";
  std::string plot = "decay.svg";

  bool operator==(const ExperimentConfig&) const = default;
};

struct ConfigIssue {
  int line = 0;  // 0 when the key is absent from the text
  std::string key;
  std::string message;
};

/// Every problem found in a config text; what() lists them one per line.
class ConfigParseError : public ConfigError {
 public:
  explicit ConfigParseError(std::vector<ConfigIssue> issues);
  [[nodiscard]] const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Parses `key = value` lines with dotted keys ('#' starts a comment),
/// validates the result and fills run.dt with the CFL step when absent.
/// Throws ConfigParseError listing every violation.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text; parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

/// Config keys in canonical order.
std::vector<std::string> config_keys();

Obstacle make_obstacle(const ExperimentConfig& config);
DampingModel make_damping_model(const ExperimentConfig& config);
NonlinearForm make_form(const ExperimentConfig& config);
InitialDataSpec make_data_spec(const ExperimentConfig& config);
/// Unscaled problem, then the rescaled one when lambda != 1. Audits are
/// recorded but not enforced.
Problem build_problem(const ExperimentConfig& config);
RunOptions make_run_options(const ExperimentConfig& config);

/// inf |x| over the fluid region of the unscaled domain (2D), from ray marching.
double domain_inner_radius(const Obstacle& obstacle, int dim);

enum ExitCode : int { kExitOk = 0, kExitMonitor = 1, kExitSolver = 2, kExitConfig = 3 };

struct MonitorVerdicts {
  std::optional<LyapunovReport> lyapunov;
  std::optional<ComparabilityReport> comparability;
  std::optional<bool> rates;
  std::optional<bool> bootstrap;
  std::optional<bool> flux;
  std::string failures;  // names of failing monitors
  [[nodiscard]] bool pass() const { return failures.empty(); }
};

MonitorVerdicts evaluate_monitors(const ExperimentConfig& config, DiagnosticsSeries& series);

struct ExperimentOutcome {
  int exit_code = kExitOk;
  std::string diagnostic;
  std::filesystem::path csv;
  std::filesystem::path summary;
  std::filesystem::path plot;
  nlohmann::json summary_json;
  std::optional<DiagnosticsSeries> series;
};

/// Builds, audits, runs and reports one configuration into `out_dir`. Never
/// throws for config, audit or solver failures; those set the exit code.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// CSV with the fixed header, one row per record, %.16e values.
void write_series_csv(const DiagnosticsSeries& series, const std::filesystem::path& path);
std::string series_csv_header();

struct CsvSeries {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  [[nodiscard]] std::vector<double> column(const std::string& name) const;
};
CsvSeries read_series_csv(const std::filesystem::path& path);

/// Static log-log plot of ||v||^2 + Z and E against 1 + t with the
/// (1+t)^-1 and (1+t)^-2 envelopes.
void write_decay_svg(const DiagnosticsSeries& series, const std::filesystem::path& path);

// Sweeps: a config text plus `sweep.<key> = v1, v2, ...` lines; entries are
// the cartesian product of the listed values.
struct SweepPlan {
  std::string base_text;
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  [[nodiscard]] std::vector<std::string> entry_texts() const;
  [[nodiscard]] std::vector<std::string> entry_labels() const;
};
SweepPlan parse_sweep(const std::string& text);

struct SweepOutcome {
  int exit_code = kExitOk;  // worst entry exit code
  std::vector<ExperimentOutcome> entries;
  std::filesystem::path table;
};

/// Runs every entry in out_dir/entry_<k>, `jobs` at a time, and writes the
/// merged comparison table out_dir/sweep.csv.
SweepOutcome run_sweep(const SweepPlan& plan, const std::filesystem::path& out_dir, int jobs,
                       std::optional<std::uint64_t> seed);

/// Damping, star-shape, hypothesis, Poincare, Hardy/GN, form and nonlinear
/// audits without time stepping.
nlohmann::json run_audits(const ExperimentConfig& config, bool* all_pass);

nlohmann::json to_json(const DampingAudit& audit);
nlohmann::json to_json(const ExponentFit& fit);

}  // namespace dissipwave
