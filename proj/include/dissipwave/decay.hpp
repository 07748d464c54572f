#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dissipwave/coefficients.hpp"
#include "dissipwave/functionals.hpp"
#include "dissipwave/rescale.hpp"
#include "dissipwave/solver.hpp"

namespace dissipwave {

class DecayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExponentFit {
  double alpha = 0.0;
  double ci_lo = 0.0;  // 2.5% bootstrap percentile
  double ci_hi = 0.0;  // 97.5% bootstrap percentile
  int points = 0;
  double t_lo = 0.0;
  double t_hi = 0.0;
};

struct DiagnosticsSeries {
  std::vector<FunctionalReport> records;
  std::vector<double> support_radius;
  /// H(t_k) = sum_{j <= k} (1 + t_j) Z_j (t_j - t_{j-1}).
  std::vector<double> H_running;
  std::map<std::string, ExponentFit> fitted_exponents;
  /// sup over records of (1 + t)(||v||^2 + Z).
  double E0_measured = 0.0;

  /// Running trapezoidal integral of v, started at the first accumulated state.
  Field w_field;
  Field w_last_v;
  double w_time = 0.0;
  bool w_started = false;

  int dim = 2;
  double spacing = 0.0;
  double dt = 0.0;
  double b0 = 1.0;
  int history_depth = 0;
  long steps = 0;
  std::uint64_t final_hash = 0;
  double seconds = 0.0;

  /// Appends a record; times must increase strictly.
  void append(const FunctionalReport& report, double support);
  /// max(H dt, 1): records before this time are excluded from monitors.
  [[nodiscard]] double startup_time() const;
};

/// w <- w + (v_prev + v) / 2 * (t - t_prev) with the newest level of `state`.
/// Throws DecayError when the state is not newer than the last one.
void accumulate_w(DiagnosticsSeries& series, const WaveState& state);

/// ||grad w||_2 of the accumulated primitive.
double grad_w_norm(const DiagnosticsSeries& series, const ExteriorGrid& grid);

struct LyapunovReport {
  int checked = 0;
  int violations = 0;
  double max_excess = 0.0;  // largest (dG~/dt + b0/32 Z0) - tol seen
  double tol = 0.0;
  double first_violation_t = -1.0;
  [[nodiscard]] bool pass() const { return violations == 0; }
};

/// Checks (G~_{k+1} - G~_k)/(t_{k+1} - t_k) + (b0/32) Z0_k <= tol after
/// start-up, tol = c_tol (dx^2 + dt^2) max Z0.
LyapunovReport lyapunov_monitor(const DiagnosticsSeries& series, double c_tol = 5.0);

struct ComparabilityReport {
  bool skipped = true;
  double ratio_min = 0.0;
  double ratio_max = 0.0;
  double band = 10.0;
  [[nodiscard]] double spread() const { return ratio_min > 0.0 ? ratio_max / ratio_min : 0.0; }
  [[nodiscard]] bool pass() const { return skipped || spread() <= band; }
};

/// min and max of G~ / (||v||^2 + Z0) after start-up.
ComparabilityReport comparability_monitor(const DiagnosticsSeries& series, double band = 10.0);

struct HypothesisReport {
  double H1_value = 0.0;  // ||d0 (B_lambda(0) v0 + v1)||_2
  double H2_value = 0.0;  // quadrature + tail
  double H2_quadrature = 0.0;
  double H2_tail = 0.0;
  double H2_spatial_sup = 0.0;  // sup over |x| <= extent of d0 |B_lambda spatial part|
  bool H3_pass = false;
  double support_radius = 0.0;
  double M = 0.0;
};

/// H2 integrates sup_x |d0 d_t B_lambda(s, x)| over [0, t_h2] with the
/// midpoint rule and adds the exact tail |tau(lambda t_h2) - tau(inf)| of
/// the monotone profile.
HypothesisReport hypothesis_audit(const ExteriorGrid& grid, const InitialData& data,
                                  const DampingField& damping, const WeightD0& weight, double M,
                                  double t_h2 = 50.0, int samples = 20000);

/// Least squares slope of log f against log(1 + t) on records with
/// t_lo <= t <= t_hi, with a bootstrap percentile interval. Needs at least 10
/// points; throws DecayError on nonpositive values.
ExponentFit fit_decay_exponent(const std::vector<double>& t, const std::vector<double>& f, double t_lo,
                               double t_hi, int resamples = 1000, std::uint64_t seed = 2024);

/// Named series: E, Z0, Z1, Z2, Z_total, G, G_tilde, L2_plus_Z (= ||v||^2 + Z).
std::vector<double> functional_values(const DiagnosticsSeries& series, const std::string& name);
std::vector<double> record_times(const DiagnosticsSeries& series);

ExponentFit fit_decay_exponent(const DiagnosticsSeries& series, const std::string& name, double t_lo,
                               double t_hi, int resamples = 1000, std::uint64_t seed = 2024);

struct RunOptions {
  double t_final = 10.0;
  int record_stride = 10;  // steps between records
  /// Support threshold relative to the initial peak; scaled up by
  /// sqrt(E / E(0)) once the energy exceeds its initial value.
  double support_threshold_rel = 1e-6;
  double eps_speed = 0.05;
  /// Cells of slack added to the cone bound.
  double support_slack_cells = 5.0;
  /// <= 0: computed from b0, R, C1 and the sampled sup of B.
  double C0 = 0.0;
  double C1 = 0.25;
  bool track_w = false;
  /// d0 weight for H1; A <= 0 picks 2 / min |x| over fluid cells.
  double weight_A = 0.0;
  /// Called after every record.
  std::function<void(const DiagnosticsSeries&)> on_record;
  /// Called after every step (test hook).
  std::function<void(WaveState&)> after_step;
};

/// C0 for the problem's damping model with the given C1.
double problem_C0(const Problem& problem, double C1, double t_max);

/// Steps the problem to t_final. The t = 0 record comes from the Taylor ring;
/// later records sit at ring-center indices that are multiples of
/// record_stride, plus the final index. Throws SupportError when the support
/// leaves the cone M + (1 + eps_speed) t plus the slack or comes within two
/// cells of the box edge; solver errors propagate.
DiagnosticsSeries run_simulation(const Problem& problem, const RunOptions& options);

}  // namespace dissipwave
