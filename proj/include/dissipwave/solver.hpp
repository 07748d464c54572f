#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dissipwave/coefficients.hpp"
#include "dissipwave/geometry.hpp"
#include "dissipwave/nonlinearity.hpp"

namespace dissipwave {

/// d-vector field on a grid, component-major: value(c, idx) = data[c * grid.size() + idx].
using Field = std::vector<double>;

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InstabilityError : public SolverError {
 public:
  using SolverError::SolverError;
};

/// Support left the light cone or reached the box edge.
class SupportError : public SolverError {
 public:
  using SolverError::SolverError;
};

enum class DataShape { kBump, kRing };

DataShape parse_data_shape(const std::string& name);
std::string to_string(DataShape s);

struct InitialDataSpec {
  double amplitude = 1e-2;  // discrete H1 x L2 norm of (v0, v1)
  double support_radius = 4.0;  // M
  DataShape shape = DataShape::kBump;
  Point center{3.0, 0.0, 0.0};  // bump center
  double bump_radius = 1.0;
  double ring_width = 1.0;  // ring occupies M - 2w <= |x| <= M
  /// Component weights of the profile; normalized internally.
  std::array<double, 3> direction{1.0, 0.0, 0.0};
  /// v1 = velocity_ratio * profile before normalization; 0 gives v1 = 0.
  double velocity_ratio = 0.0;
};

struct InitialData {
  int ncomp = 2;
  Field v0;
  Field v1;
  double norm = 0.0;            // measured discrete H1 x L2 norm
  double support_radius = 0.0;  // largest |x| where the profile is nonzero
  double peak = 0.0;            // max |v0|, |v1| over cells
};

/// Smooth compactly supported profile (1 - s^2)^4 on s < 1.
double bump_profile(double s);

/// Scaled so the discrete H1 x L2 norm equals spec.amplitude exactly up to
/// rounding. Throws std::invalid_argument when the profile does not vanish
/// on the obstacle surface or M does not fit in the box.
InitialData make_initial_data(const ExteriorGrid& grid, const InitialDataSpec& spec);

/// sqrt(||v0||^2 + ||grad v0||^2 + ||v1||^2) with the energy-consistent gradient.
double data_norm(const ExteriorGrid& grid, int ncomp, const Field& v0, const Field& v1);

/// 0.9 dx / sqrt(d).
double cfl_limit(const ExteriorGrid& grid);

/// Inclusive padded-index box of cells that may be nonzero.
struct ActiveWindow {
  std::array<int, 3> lo{1, 1, 1};
  std::array<int, 3> hi{0, 0, 0};

  [[nodiscard]] bool empty() const { return lo[0] > hi[0]; }
};

struct StepCache;

/// Discrete solution with a ring of the last H = 2 mu_max + 3 time levels.
class WaveState {
 public:
  WaveState(const ExteriorGrid& grid, double dt, int mu_max);

  [[nodiscard]] const ExteriorGrid& grid() const { return *grid_; }
  [[nodiscard]] int ncomp() const { return ncomp_; }
  [[nodiscard]] double dt() const { return dt_; }
  [[nodiscard]] int mu_max() const { return mu_max_; }
  /// H = 2 mu_max + 3.
  [[nodiscard]] int history_depth() const;
  /// Index n of the newest level.
  [[nodiscard]] long step_index() const { return step_; }
  [[nodiscard]] double time() const { return static_cast<double>(step_) * dt_; }
  [[nodiscard]] double time_of(long n) const { return static_cast<double>(n) * dt_; }
  /// Number of stored levels (at most H).
  [[nodiscard]] int levels_stored() const { return levels_; }
  [[nodiscard]] bool primed() const { return levels_ >= history_depth(); }

  /// Level n - back, back in [0, levels_stored()).
  [[nodiscard]] const Field& level(int back) const;
  [[nodiscard]] Field& mutable_level(int back);
  /// Offset of the ring center from the newest level (mu_max + 1).
  [[nodiscard]] int center_back() const { return mu_max_ + 1; }
  [[nodiscard]] double center_time() const { return time_of(step_ - center_back()); }

  [[nodiscard]] const ActiveWindow& window() const { return window_; }
  [[nodiscard]] bool component_active(int c) const { return active_[static_cast<std::size_t>(c)]; }
  [[nodiscard]] double* component(Field& f, int c) const { return f.data() + c * grid_->size(); }
  [[nodiscard]] const double* component(const Field& f, int c) const {
    return f.data() + c * grid_->size();
  }

  /// Appends a new newest level (used by start-up and synthetic states).
  void push_level(Field f);
  /// Replaces the ring with levels at times (first_index + k) dt, k = 0.. .
  void set_levels(long first_index, std::vector<Field> levels);
  void set_window(const ActiveWindow& w) { window_ = w; }
  void widen_window_to_all();
  void set_component_active(int c, bool on) { active_[static_cast<std::size_t>(c)] = on; }
  /// Reference size for the instability detector.
  double reference_peak = 0.0;

  /// Buffer that will hold level n + 1; its previous content is the oldest
  /// stored level once the ring is full.
  Field& next_slot();
  /// Makes next_slot() the newest level.
  void commit_step();

  std::shared_ptr<StepCache> cache;

 private:
  const ExteriorGrid* grid_;
  int ncomp_;
  double dt_;
  int mu_max_;
  std::vector<Field> ring_;
  long step_ = -1;
  int levels_ = 0;
  ActiveWindow window_;
  std::array<bool, 3> active_{true, true, true};
};

/// Component-wise window of nonzero cells of `f`.
ActiveWindow nonzero_window(const ExteriorGrid& grid, int ncomp, const Field& f);

/// Builds level 0 and the Taylor level 1. History is then filled by step().
WaveState start_state(const ExteriorGrid& grid, const InitialData& data, const DampingField& damping,
                      const NonlinearForm& form, double dt, int mu_max);

/// A ring centered at t = 0 filled from the cubic Taylor polynomial of the
/// data, for the initial diagnostics record.
WaveState taylor_ring(const ExteriorGrid& grid, const InitialData& data,
                      const DampingField& damping, const NonlinearForm& form, double dt, int mu_max);

/// One leapfrog step with trapezoidal damping. Throws SolverError when dt
/// exceeds the CFL limit or differs from the state's dt, InstabilityError when
/// the field grows beyond 1e6 times the initial peak.
void step(WaveState& state, const DampingField& damping, const NonlinearForm& form, double dt);

/// Staggered energy E^{n+1/2} between the two newest levels; exactly
/// conserved without damping and forcing, nonincreasing with damping.
double leapfrog_energy(const WaveState& state);

/// Largest |x| among cells where |v| or |v_t| at the ring center exceeds
/// threshold; 0 if none.
double support_radius(const WaveState& state, double threshold);

/// State whose ring holds f(t, x) at t = (first_index + k) dt. f returns the
/// d-vector value; values at non-fluid cells are ignored.
WaveState make_synthetic_state(const ExteriorGrid& grid, double dt, int mu_max, long first_index,
                               const std::function<std::array<double, 3>(double, const Point&)>& f);

/// FNV-1a hash of the bytes of the newest level.
std::uint64_t state_hash(const WaveState& state);

}  // namespace dissipwave
