#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "dissipwave/coefficients.hpp"
#include "dissipwave/geometry.hpp"
#include "dissipwave/nonlinearity.hpp"
#include "dissipwave/solver.hpp"

namespace dissipwave {

class RescaleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when lambda = 2^k for an integer k.
bool is_power_of_two(double lambda);

struct GridSpec {
  int dim = 2;
  double spacing = 0.1;
  double extent = 10.0;
  Obstacle obstacle;

  [[nodiscard]] ExteriorGrid build() const;
  /// Spacing and extent divided by lambda, obstacle shrunk by lambda.
  [[nodiscard]] GridSpec rescaled(double lambda) const;
};

/// Cell-to-cell bijection between a grid and its image under x -> x / lambda.
struct RescaleMap {
  double lambda = 1.0;
  GridSpec source;
  GridSpec target;
};

RescaleMap make_rescale_map(const GridSpec& source, double lambda);

/// v(t, x) = u(lambda t, lambda x) / lambda on the target grid: each stored
/// level is divided by lambda cell by cell, dt becomes dt / lambda and the
/// step index is kept, so the time becomes t / lambda. Throws RescaleError
/// when `target` is not the image of the state's grid.
WaveState rescale_state(const WaveState& u, double lambda, const ExteriorGrid& target);

/// v0 = u0(lambda x) / lambda, v1 = u1(lambda x) on the target grid.
InitialData rescale_data(const InitialData& u, double lambda, const ExteriorGrid& target);

/// A fully specified discrete problem (DW)_lambda.
struct Problem {
  GridSpec grid_spec;
  std::shared_ptr<const ExteriorGrid> grid;
  DampingField damping;
  NonlinearForm form = catalog::zero();
  InitialData data;
  double dt = 0.0;
  int mu_max = 2;
  /// Accumulated scale relative to the physical problem.
  double lambda = 1.0;
  /// (B1)_lambda - (B4)_lambda on the problem's grid.
  DampingAudit audit;
};

/// Builds the grid, the data and (when dt <= 0) the CFL time step of the
/// unscaled problem, and audits the damping.
Problem make_problem(const GridSpec& grid, const DampingModel& model, const NonlinearForm& form,
                     const InitialDataSpec& data, double dt, int mu_max,
                     const std::vector<double>& audit_times);

/// Target grid, dt / lambda, B_lambda, lambda Ftilde, rescaled data; the
/// damping audits are re-run on the result. Throws RescaleError for a lambda
/// that is not a power of two and ConfigError when an audit fails.
Problem rescale_problem(const Problem& base, double lambda, const std::vector<double>& audit_times,
                        bool require_audits = true);

/// Activation radius R / lambda of the rescaled damping.
double activation_radius(const DampingField& damping);
/// Far-field lower bound lambda b0 of the rescaled damping.
double far_field_bound(const DampingField& damping);

struct EquivarianceReport {
  int steps = 0;
  double lambda = 1.0;
  double max_rel_diff = 0.0;  // componentwise, relative to the field peak
  double max_abs_diff = 0.0;
  bool bitwise_equal = false;
  double seconds = 0.0;
};

/// Solves `steps` steps of `base`, then rescales, and compares with solving
/// the rescaled problem for the same number of steps.
EquivarianceReport equivariance_test(const Problem& base, double lambda, int steps);

}  // namespace dissipwave
