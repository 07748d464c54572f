#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dissipwave/coefficients.hpp"
#include "dissipwave/geometry.hpp"
#include "dissipwave/nonlinearity.hpp"
#include "dissipwave/solver.hpp"

namespace dissipwave {

class HistoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct C0Inputs {
  double b0 = 1.0;
  double R = 4.0;
  int dim = 2;
  double C1 = 0.25;
  double B_sup = 1.0;  // sup of the largest eigenvalue of the unscaled B
};

/// max{4 b0 R + C1 b0 (2d-1)/2, d, 8 |B|_inf b0 R^2}, C1 floored at 1/4.
double compute_C0(const C0Inputs& in);

/// C0/lambda + b0 (2d-1)/4 + 1.
double bar_C(double C0, double lambda, double b0, int dim);

/// Everything besides the state that the weighted functionals depend on.
struct FunctionalContext {
  DampingField damping;
  MultiplierField multiplier;
  NonlinearForm form = catalog::zero();
  double C0 = 0.0;
  /// ||d0 (B_lambda(0) v0 + v1)||_2, copied into every report.
  double weighted_data_norm = 0.0;
};

/// Builds a context whose multiplier matches the damping (same b0, R, lambda).
FunctionalContext make_context(const DampingField& damping, const NonlinearForm& form, double C0);

struct FunctionalReport {
  double t = 0.0;
  double E = 0.0;
  std::vector<double> Z;  // Z_m, m = 0..mu_max
  double Z_total = 0.0;
  double G = 0.0;
  double G_tilde = 0.0;
  double boundary_flux = 0.0;
  double weighted_L2_of_data = 0.0;
  double comparability_ratio = 0.0;  // G_tilde / (||v||^2 + Z0)
  double v_norm_sq = 0.0;
  /// sum over mu of <d_t^mu v, B_lambda d_t^mu v>
  double damping_form = 0.0;
  /// (b0 R / lambda) Z0 + (b0 (2d-1)/16) damping_form, the lower bound G should dominate.
  double G_lower_bound = 0.0;
};

/// All functionals at the ring center time. Requires a primed history.
FunctionalReport evaluate_functionals(const WaveState& state, const FunctionalContext& ctx);

/// 1/2 (||d_t v||^2 + ||grad v||^2) at the ring center.
double compute_energy(const WaveState& state);
double compute_Zm(const WaveState& state, int m);
double compute_G(const WaveState& state, const FunctionalContext& ctx);
double compute_G_tilde(const WaveState& state, const FunctionalContext& ctx);
/// sum over mu of the boundary integral of h.sigma |sigma . grad d_t^mu v|^2.
double boundary_flux(const WaveState& state, const MultiplierField& multiplier);

/// Weights of the centered difference for d^order/dt^order on offsets
/// -half..half, half = ceil(order/2); second order accurate.
std::vector<double> central_weights(int order);

// Inequality audits.

struct PoincareTrial {
  Point center{};
  double radius = 0.0;
  bool far_field = false;
  double C = 0.0;  // smallest admissible constant for this trial
};

struct PoincareReport {
  double C1_measured = 0.0;  // max over trials
  double C_min = 0.0;        // min over trials
  double C_proof = 0.0;      // max{(4R^2 |grad rho|^2 + 1)/b0, 4R^2}
  bool proof_constant_holds = false;
  int trials_run = 0;
  int trials_skipped = 0;
  std::vector<PoincareTrial> trials;
};

/// Random bumps, half supported in the far field |x| >= R/lambda and half
/// near the obstacle. B_lambda is evaluated at time t_eval.
PoincareReport poincare_audit(const ExteriorGrid& grid, const DampingModel& model, double lambda,
                              int trial_count, std::uint64_t seed = 11, double t_eval = 0.0);

/// Proof constant of the Poincare-type inequality for the quintic cutoff
/// rho = 1 on |x| <= 1, 0 on |x| >= 3/2.
double poincare_proof_constant(double b0, double R);

struct HardyReport {
  double hardy_ratio_max = 0.0;  // ||f / d0||_2 / ||grad f||_2
  double gn_ratio_max = 0.0;     // ||f||_r / ||grad f||_q
  double q = 2.0;
  double r = 0.0;
  int trials_run = 0;
};

/// Radial Gaussian and off-center bump trials. q defaults to 2 in 3D and 1 in
/// 2D, with 1/r = 1/q - 1/d.
HardyReport hardy_gn_audit(const ExteriorGrid& grid, const WeightD0& weight, int trial_count,
                           std::uint64_t seed = 13, double q = 0.0);

struct NonlinearBoundReport {
  bool skipped = false;
  double Z = 0.0;
  double ratio_A1 = 0.0;  // max_{|alpha|<=1} ||d^alpha Ftilde_lambda|| / Z
  double ratio_A2 = 0.0;  // max ||d^alpha v^i d^beta c_ij^ab|| / Z
};

NonlinearBoundReport nonlinear_bound_audit(const WaveState& state, const NonlinearForm& form);

}  // namespace dissipwave
