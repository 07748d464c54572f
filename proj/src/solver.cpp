#include "dissipwave/solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "stencil.hpp"
#include "window.hpp"

namespace dissipwave {

DataShape parse_data_shape(const std::string& name) {
  if (name == "bump") return DataShape::kBump;
  if (name == "ring") return DataShape::kRing;
  throw std::invalid_argument("unknown data shape '" + name + "'");
}

std::string to_string(DataShape s) { return s == DataShape::kBump ? "bump" : "ring"; }

double bump_profile(double s) {
  if (!(s < 1.0)) return 0.0;
  const double q = 1.0 - s * s;
  return q * q * q * q;
}

double data_norm(const ExteriorGrid& grid, int ncomp, const Field& v0, const Field& v1) {
  const std::size_t n = grid.size();
  CompensatedSum acc;
  for (int c = 0; c < ncomp; ++c) {
    const double* a = v0.data() + c * n;
    const double* b = v1.data() + c * n;
    acc += detail::l2_norm_sq(grid, a);
    acc += detail::gradient_norm_sq(grid, a);
    acc += detail::l2_norm_sq(grid, b);
  }
  return std::sqrt(acc.value());
}

InitialData make_initial_data(const ExteriorGrid& grid, const InitialDataSpec& spec) {
  if (!(spec.amplitude >= 0.0)) throw std::invalid_argument("data amplitude must be nonnegative");
  if (!(spec.support_radius > 0.0) || !(spec.support_radius < grid.extent())) {
    throw std::invalid_argument("support radius M must lie in (0, extent)");
  }
  const int ncomp = grid.dim();
  InitialData data;
  data.ncomp = ncomp;
  const std::size_t n = grid.size();
  data.v0.assign(n * static_cast<std::size_t>(ncomp), 0.0);
  data.v1.assign(n * static_cast<std::size_t>(ncomp), 0.0);

  std::function<double(const Point&)> profile;
  if (spec.shape == DataShape::kBump) {
    if (!(spec.bump_radius > 0.0)) throw std::invalid_argument("bump radius must be positive");
    Point c = spec.center;
    for (int a = grid.dim(); a < 3; ++a) c[a] = 0.0;
    data.support_radius = norm(c) + spec.bump_radius;
    profile = [c, r = spec.bump_radius](const Point& x) {
      const Point d{x[0] - c[0], x[1] - c[1], x[2] - c[2]};
      return bump_profile(norm(d) / r);
    };
  } else {
    if (!(spec.ring_width > 0.0)) throw std::invalid_argument("ring width must be positive");
    const double rc = spec.support_radius - spec.ring_width;
    data.support_radius = spec.support_radius;
    profile = [rc, w = spec.ring_width](const Point& x) {
      return bump_profile(std::abs(norm(x) - rc) / w);
    };
  }
  if (!(data.support_radius < grid.safe_radius())) {
    throw std::invalid_argument("initial data support does not fit inside the box");
  }
  for (const auto& f : grid.boundary_faces()) {
    if (profile(f.x) > 0.0) {
      throw std::invalid_argument("initial data do not vanish on the obstacle boundary");
    }
  }

  double dn = 0.0;
  for (int c = 0; c < ncomp; ++c) dn += spec.direction[c] * spec.direction[c];
  if (!(dn > 0.0)) throw std::invalid_argument("data direction must be nonzero");
  dn = std::sqrt(dn);

  for (std::size_t idx : grid.fluid_cells()) {
    const double p = profile(grid.center(idx));
    if (p == 0.0) continue;
    for (int c = 0; c < ncomp; ++c) {
      const double e = spec.direction[c] / dn;
      data.v0[c * n + idx] = e * p;
      data.v1[c * n + idx] = spec.velocity_ratio * e * p;
    }
  }
  const double raw = data_norm(grid, ncomp, data.v0, data.v1);
  if (spec.amplitude == 0.0 || raw == 0.0) {
    std::fill(data.v0.begin(), data.v0.end(), 0.0);
    std::fill(data.v1.begin(), data.v1.end(), 0.0);
    data.norm = 0.0;
    return data;
  }
  const double scale = spec.amplitude / raw;
  for (double& v : data.v0) v *= scale;
  for (double& v : data.v1) v *= scale;
  data.norm = data_norm(grid, ncomp, data.v0, data.v1);
  for (std::size_t k = 0; k < data.v0.size(); ++k) {
    data.peak = std::max({data.peak, std::abs(data.v0[k]), std::abs(data.v1[k])});
  }
  return data;
}

double cfl_limit(const ExteriorGrid& grid) {
  return 0.9 * grid.spacing() / std::sqrt(static_cast<double>(grid.dim()));
}

// ---------------------------------------------------------------------------

WaveState::WaveState(const ExteriorGrid& grid, double dt, int mu_max)
    : grid_(&grid), ncomp_(grid.dim()), dt_(dt), mu_max_(mu_max) {
  if (mu_max < 0) throw std::invalid_argument("mu_max must be nonnegative");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  // The leapfrog update reads three levels while writing a fourth.
  const int depth = std::max(2 * mu_max + 3, 4);
  ring_.assign(static_cast<std::size_t>(depth),
               Field(grid.size() * static_cast<std::size_t>(ncomp_), 0.0));
}

namespace {

std::size_t ring_slot(long n, std::size_t depth) {
  const long d = static_cast<long>(depth);
  return static_cast<std::size_t>(((n % d) + d) % d);
}

}  // namespace

const Field& WaveState::level(int back) const {
  if (back < 0 || back >= levels_) throw std::out_of_range("history level not stored");
  return ring_[ring_slot(step_ - back, ring_.size())];
}

Field& WaveState::mutable_level(int back) {
  if (back < 0 || back >= levels_) throw std::out_of_range("history level not stored");
  return ring_[ring_slot(step_ - back, ring_.size())];
}

int WaveState::history_depth() const { return 2 * mu_max_ + 3; }

void WaveState::push_level(Field f) {
  if (f.size() != grid_->size() * static_cast<std::size_t>(ncomp_)) {
    throw std::invalid_argument("level has the wrong size");
  }
  ++step_;
  ring_[ring_slot(step_, ring_.size())] = std::move(f);
  levels_ = std::min(levels_ + 1, static_cast<int>(ring_.size()));
}

void WaveState::set_levels(long first_index, std::vector<Field> levels) {
  if (levels.empty() || levels.size() > ring_.size()) {
    throw std::invalid_argument("level count must lie in [1, ring size]");
  }
  levels_ = 0;
  step_ = first_index - 1;
  for (auto& f : levels) push_level(std::move(f));
}

Field& WaveState::next_slot() { return ring_[ring_slot(step_ + 1, ring_.size())]; }

void WaveState::commit_step() {
  ++step_;
  levels_ = std::min(levels_ + 1, static_cast<int>(ring_.size()));
}

void WaveState::widen_window_to_all() {
  for (int a = 0; a < 3; ++a) {
    window_.lo[a] = a < grid_->dim() ? 1 : 0;
    window_.hi[a] = a < grid_->dim() ? grid_->cells_per_axis() : 0;
  }
}

ActiveWindow nonzero_window(const ExteriorGrid& grid, int ncomp, const Field& f) {
  ActiveWindow w;
  for (int a = 0; a < 3; ++a) {
    w.lo[a] = std::numeric_limits<int>::max();
    w.hi[a] = std::numeric_limits<int>::min();
  }
  const std::size_t n = grid.size();
  bool any = false;
  for (std::size_t idx : grid.fluid_cells()) {
    bool nz = false;
    for (int c = 0; c < ncomp && !nz; ++c) nz = f[c * n + idx] != 0.0;
    if (!nz) continue;
    any = true;
    const auto ijk = grid.unravel(idx);
    for (int a = 0; a < 3; ++a) {
      w.lo[a] = std::min(w.lo[a], ijk[a]);
      w.hi[a] = std::max(w.hi[a], ijk[a]);
    }
  }
  if (!any) return ActiveWindow{};
  return w;
}

namespace {

using detail::expand;
using detail::for_window;
using detail::merge;

bool is_coupled(const DampingField& damping, const NonlinearForm& form) {
  if (!damping.is_scalar()) return true;
  if (form.has_quasilinear()) return true;
  return form.has_semilinear() && !form.componentwise;
}

bool same_model(const DampingModel& a, const DampingModel& b) {
  return a.b0 == b.b0 && a.R == b.R && a.cutoff_inner == b.cutoff_inner &&
         a.time_profile == b.time_profile && a.matrix_mode == b.matrix_mode &&
         a.anisotropy == b.anisotropy && a.sign == b.sign;
}

}  // namespace

struct StepCache {
  DampingModel model;
  double lambda = 1.0;
  std::vector<std::uint8_t> fluid;
  std::vector<double> diag;     // 2d + Dirichlet correction at fluid cells
  std::vector<double> spatial;  // spatial factor of the scalar damping
  // Maximal runs of fluid cells along the unit-stride axis, per grid row.
  std::vector<std::array<int, 2>> runs;
  std::vector<std::size_t> row_runs;  // runs of row r: [row_runs[r], row_runs[r + 1])

  StepCache(const ExteriorGrid& g, const DampingField& damping)
      : model(damping.model), lambda(damping.lambda) {
    const std::size_t n = g.size();
    fluid.assign(n, 0);
    diag.assign(n, 0.0);
    spatial.assign(n, 0.0);
    const auto& extra = g.diagonal_extra();
    for (std::size_t idx : g.fluid_cells()) {
      fluid[idx] = 1;
      diag[idx] = 2.0 * g.dim() + extra[idx];
      spatial[idx] = damping.spatial_factor(g.center(idx));
    }
    const int len = g.padded_shape()[static_cast<std::size_t>(g.dim() - 1)];
    const std::size_t rows = n / static_cast<std::size_t>(len);
    row_runs.reserve(rows + 1);
    for (std::size_t r = 0; r < rows; ++r) {
      row_runs.push_back(runs.size());
      const std::uint8_t* f = fluid.data() + r * static_cast<std::size_t>(len);
      for (int k = 0; k < len;) {
        if (!f[k]) {
          ++k;
          continue;
        }
        int e = k;
        while (e + 1 < len && f[e + 1]) ++e;
        runs.push_back({k, e});
        k = e + 1;
      }
    }
    row_runs.push_back(runs.size());
  }

  /// Calls fn(first, count) for each fluid run clipped to the window.
  template <typename Fn>
  void for_runs(const ExteriorGrid& g, const ActiveWindow& w, Fn&& fn) const {
    if (w.empty()) return;
    const int d = g.dim();
    const int inner = d - 1;
    const std::size_t len = static_cast<std::size_t>(g.padded_shape()[static_cast<std::size_t>(inner)]);
    const auto row = [&](std::size_t r) {
      for (std::size_t q = row_runs[r]; q < row_runs[r + 1]; ++q) {
        const int a = std::max(runs[q][0], w.lo[static_cast<std::size_t>(inner)]);
        const int b = std::min(runs[q][1], w.hi[static_cast<std::size_t>(inner)]);
        if (a <= b) fn(r * len + static_cast<std::size_t>(a), static_cast<std::size_t>(b - a + 1));
      }
    };
    if (d == 2) {
      for (int i = w.lo[0]; i <= w.hi[0]; ++i) row(static_cast<std::size_t>(i));
    } else {
      const std::size_t p1 = static_cast<std::size_t>(g.padded_shape()[1]);
      for (int i = w.lo[0]; i <= w.hi[0]; ++i) {
        for (int j = w.lo[1]; j <= w.hi[1]; ++j) row(static_cast<std::size_t>(i) * p1 + static_cast<std::size_t>(j));
      }
    }
  }

  [[nodiscard]] bool matches(const DampingField& d) const {
    return lambda == d.lambda && same_model(model, d.model);
  }
};

namespace {

StepCache& ensure_cache(WaveState& s, const DampingField& damping) {
  if (!s.cache || !s.cache->matches(damping)) {
    s.cache = std::make_shared<StepCache>(s.grid(), damping);
  }
  return *s.cache;
}

using LocalMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using LocalVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;

double laplacian(const StepCache& cache, const std::array<std::size_t, 3>& st, int dim,
                 const double* v, std::size_t idx, double inv_dx2) {
  double sum = v[idx + st[0]] + v[idx - st[0]] + v[idx + st[1]] + v[idx - st[1]];
  if (dim == 3) sum += v[idx + st[2]] + v[idx - st[2]];
  return (sum - cache.diag[idx] * v[idx]) * inv_dx2;
}

/// First-order jet, spatial Hessian and mixed time-space derivatives at a cell.
struct CellJet {
  Jet xi;
  Hessian hess;
};

/// Fills xi_{i,a} for a >= 1 and the spatial Hessian from `v`; the time
/// column and the time-space block come from `vt`, a field of d_t v.
void cell_jet(const detail::Stencil& st, int ncomp, std::size_t n, const double* v,
              const double* vt, std::size_t idx, CellJet& out) {
  const int d = st.dim;
  out.xi.dim = d;
  for (int i = 0; i < ncomp; ++i) {
    const double* f = v + i * n;
    const double* ft = vt + i * n;
    out.xi.at(i, 0) = ft[idx];
    for (int a = 1; a <= d; ++a) {
      out.xi.at(i, a) = st.d1(f, idx, a - 1);
      const double dta = st.d1(ft, idx, a - 1);
      out.hess.at(i, 0, a) = dta;
      out.hess.at(i, a, 0) = dta;
      out.hess.at(i, a, a) = st.d2(f, idx, a - 1);
      for (int b = a + 1; b <= d; ++b) {
        const double m = st.dmixed(f, idx, a - 1, b - 1);
        out.hess.at(i, a, b) = m;
        out.hess.at(i, b, a) = m;
      }
    }
    out.hess.at(i, 0, 0) = 0.0;
  }
}

/// F without the d_t^2 terms, and the matrix c^{00}_{ij}.
template <typename Vec, typename Mat>
void split_forcing(const NonlinearForm& form, const CellJet& jet, int d, Vec& rest, Mat& c00) {
  const Vec3 semi = form.semilinear_part(jet.xi);
  rest.setZero(d);
  c00.setZero(d, d);
  for (int i = 0; i < d; ++i) rest(i) = semi[static_cast<std::size_t>(i)];
  if (!form.has_quasilinear()) return;
  thread_local CoefTensor c;
  form.coefficients(jet.xi, c);
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) {
      c00(i, j) = c.at(i, j, 0, 0);
      for (int a = 0; a <= d; ++a) {
        for (int b = 0; b <= d; ++b) {
          if (a == 0 && b == 0) continue;
          s += c.at(i, j, a, b) * jet.hess.at(j, a, b);
        }
      }
    }
    rest(i) += s;
  }
}

/// Taylor data a0 = d_t^2 v(0) and j0 = d_t^3 v(0) (linear part) on `window`.
void taylor_coefficients(const ExteriorGrid& g, const InitialData& data, const DampingField& damping,
                         const NonlinearForm& form, const StepCache& cache,
                         const ActiveWindow& window, Field& a0, Field& j0) {
  const std::size_t n = g.size();
  const int d = g.dim();
  const detail::Stencil st(g);
  const double inv_dx2 = 1.0 / (g.spacing() * g.spacing());
  a0.assign(data.v0.size(), 0.0);
  j0.assign(data.v0.size(), 0.0);
  CellJet jet;
  for_window(g, window, [&](std::size_t idx) {
    if (!cache.fluid[idx]) return;
    const Point x = g.center(idx);
    const LocalMatrix b = damping.eval(d, 0.0, x);
    LocalVector v1(d);
    LocalVector lap(d);
    for (int i = 0; i < d; ++i) {
      v1(i) = data.v1[i * n + idx];
      lap(i) = laplacian(cache, g.strides(), d, data.v0.data() + i * n, idx, inv_dx2);
    }
    LocalVector rest;
    LocalMatrix c00;
    if (form.is_zero()) {
      rest = LocalVector::Zero(d);
      c00 = LocalMatrix::Zero(d, d);
    } else {
      cell_jet(st, d, n, data.v0.data(), data.v1.data(), idx, jet);
      split_forcing(form, jet, d, rest, c00);
    }
    const LocalVector rhs = lap - b * v1 + rest;
    LocalVector acc = rhs;
    if (!c00.isZero(0.0)) acc = (LocalMatrix::Identity(d, d) - c00).partialPivLu().solve(rhs);
    for (int i = 0; i < d; ++i) a0[i * n + idx] = acc(i);
  });
  for_window(g, window, [&](std::size_t idx) {
    if (!cache.fluid[idx]) return;
    const Point x = g.center(idx);
    const LocalMatrix b = damping.eval(d, 0.0, x);
    const LocalMatrix bt = damping.eval_dt(d, 0.0, x);
    LocalVector v1(d);
    LocalVector a(d);
    LocalVector lap(d);
    for (int i = 0; i < d; ++i) {
      v1(i) = data.v1[i * n + idx];
      a(i) = a0[i * n + idx];
      lap(i) = laplacian(cache, g.strides(), d, data.v1.data() + i * n, idx, inv_dx2);
    }
    const LocalVector j = lap - b * a - bt * v1;
    for (int i = 0; i < d; ++i) j0[i * n + idx] = j(i);
  });
}

Field taylor_level(const InitialData& data, const Field& a0, const Field& j0, double s) {
  Field out(data.v0.size());
  const double s2 = 0.5 * s * s;
  const double s3 = s * s * s / 6.0;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = data.v0[k] + s * data.v1[k] + s2 * a0[k] + s3 * j0[k];
  }
  return out;
}

void init_activity(WaveState& s, const InitialData& data, const DampingField& damping,
                   const NonlinearForm& form) {
  const bool coupled = is_coupled(damping, form);
  const std::size_t n = s.grid().size();
  for (int c = 0; c < s.ncomp(); ++c) {
    bool nz = coupled;
    for (std::size_t idx = 0; idx < n && !nz; ++idx) {
      nz = data.v0[c * n + idx] != 0.0 || data.v1[c * n + idx] != 0.0;
    }
    s.set_component_active(c, nz);
  }
  s.reference_peak = data.peak;
}

void check_data(const ExteriorGrid& grid, const InitialData& data) {
  const std::size_t expect = grid.size() * static_cast<std::size_t>(grid.dim());
  if (data.v0.size() != expect || data.v1.size() != expect) {
    throw std::invalid_argument("initial data do not match the grid");
  }
}

}  // namespace

WaveState start_state(const ExteriorGrid& grid, const InitialData& data, const DampingField& damping,
                      const NonlinearForm& form, double dt, int mu_max) {
  check_data(grid, data);
  WaveState s(grid, dt, mu_max);
  init_activity(s, data, damping, form);
  StepCache& cache = ensure_cache(s, damping);
  const ActiveWindow w0 = merge(nonzero_window(grid, data.ncomp, data.v0),
                                nonzero_window(grid, data.ncomp, data.v1));
  const ActiveWindow w1 = expand(grid, w0);
  Field a0;
  Field j0;
  taylor_coefficients(grid, data, damping, form, cache, w1, a0, j0);
  s.set_levels(0, {data.v0, taylor_level(data, a0, j0, dt)});
  s.set_window(w1);
  return s;
}

WaveState taylor_ring(const ExteriorGrid& grid, const InitialData& data,
                      const DampingField& damping, const NonlinearForm& form, double dt,
                      int mu_max) {
  check_data(grid, data);
  WaveState s(grid, dt, mu_max);
  init_activity(s, data, damping, form);
  StepCache& cache = ensure_cache(s, damping);
  const ActiveWindow w0 = merge(nonzero_window(grid, data.ncomp, data.v0),
                                nonzero_window(grid, data.ncomp, data.v1));
  const ActiveWindow w1 = expand(grid, w0);
  Field a0;
  Field j0;
  taylor_coefficients(grid, data, damping, form, cache, w1, a0, j0);
  const int half = mu_max + 1;
  std::vector<Field> levels;
  for (int k = -half; k <= half; ++k) levels.push_back(taylor_level(data, a0, j0, k * dt));
  s.set_levels(-half, std::move(levels));
  s.set_window(w1);
  return s;
}

namespace {

template <int DIM, bool SEMI>
void scalar_kernel(WaveState& s, const StepCache& cache, const ActiveWindow& w, double tau,
                   double semi_coeff, Field& out) {
  const ExteriorGrid& g = s.grid();
  const std::size_t n = g.size();
  const auto& st = g.strides();
  const std::size_t s0 = st[0];
  const std::size_t s1 = DIM == 3 ? st[1] : 0;
  const double dt = s.dt();
  const double hdt_tau = 0.5 * dt * tau;
  const double dt2 = dt * dt;
  const double inv_dx2 = 1.0 / (g.spacing() * g.spacing());
  const bool have_m2 = s.levels_stored() >= 3;
  const Field& vn = s.level(0);
  const Field& vm1 = s.level(1);
  const Field& vm2 = have_m2 ? s.level(2) : s.level(1);
  // Backward difference for d_t v at level n.
  const double bwd_a = have_m2 ? 1.5 / dt : 1.0 / dt;
  const double bwd_b = have_m2 ? 2.0 / dt : 1.0 / dt;
  const double bwd_c = have_m2 ? 0.5 / dt : 0.0;

  int comps[3];
  int ncomp = 0;
  for (int c = 0; c < s.ncomp(); ++c)
    if (s.component_active(c)) comps[ncomp++] = c;

  std::vector<double> speed;
  cache.for_runs(g, w, [&](std::size_t first, std::size_t count) {
    const double* __restrict sp = cache.spatial.data() + first;
    const double* __restrict dg = cache.diag.data() + first;
    if constexpr (SEMI) {
      if (ncomp == 1) {
        // One active component: the speed is |d_t v| and the update fuses into one pass.
        const std::size_t o = static_cast<std::size_t>(comps[0]) * n + first;
        const double* __restrict v = vn.data() + o;
        const double* __restrict old = vm1.data() + o;
        const double* __restrict older = vm2.data() + o;
        double* __restrict dst = out.data() + o;
        for (std::size_t k = 0; k < count; ++k) {
          double sum = v[k + s0] + v[k - s0] + v[k + 1] + v[k - 1];
          if constexpr (DIM == 3) sum += v[k + s1] + v[k - s1];
          const double vt = bwd_a * v[k] - bwd_b * old[k] + bwd_c * older[k];
          const double force = (sum - dg[k] * v[k]) * inv_dx2 + semi_coeff * std::abs(vt) * vt;
          const double hb = hdt_tau * sp[k];
          dst[k] = (2.0 * v[k] - old[k] + hb * old[k] + dt2 * force) / (1.0 + hb);
        }
        return;
      }
      speed.assign(count, 0.0);
      for (int q = 0; q < ncomp; ++q) {
        const std::size_t o = static_cast<std::size_t>(comps[q]) * n + first;
        const double* __restrict a = vn.data() + o;
        const double* __restrict b = vm1.data() + o;
        const double* __restrict c = vm2.data() + o;
        for (std::size_t k = 0; k < count; ++k) {
          const double vt = bwd_a * a[k] - bwd_b * b[k] + bwd_c * c[k];
          speed[k] += vt * vt;
        }
      }
      for (std::size_t k = 0; k < count; ++k) speed[k] = semi_coeff * std::sqrt(speed[k]);
    }
    for (int q = 0; q < ncomp; ++q) {
      const std::size_t o = static_cast<std::size_t>(comps[q]) * n + first;
      const double* __restrict v = vn.data() + o;
      const double* __restrict old = vm1.data() + o;
      const double* __restrict older = vm2.data() + o;
      double* __restrict dst = out.data() + o;
      for (std::size_t k = 0; k < count; ++k) {
        double sum = v[k + s0] + v[k - s0] + v[k + 1] + v[k - 1];
        if constexpr (DIM == 3) sum += v[k + s1] + v[k - s1];
        double force = (sum - dg[k] * v[k]) * inv_dx2;
        if constexpr (SEMI) force += speed[k] * (bwd_a * v[k] - bwd_b * old[k] + bwd_c * older[k]);
        const double hb = hdt_tau * sp[k];
        dst[k] = (2.0 * v[k] - old[k] + hb * old[k] + dt2 * force) / (1.0 + hb);
      }
    }
  });
}

template <int D>
void general_kernel(WaveState& s, const StepCache& cache, const ActiveWindow& w,
                    const DampingField& damping, const NonlinearForm& form, Field& out) {
  const ExteriorGrid& g = s.grid();
  constexpr int d = D;
  using Mat = Eigen::Matrix<double, D, D>;
  using Vec = Eigen::Matrix<double, D, 1>;
  const std::size_t n = g.size();
  const double dt = s.dt();
  const double hdt = 0.5 * dt;
  const double dt2 = dt * dt;
  const double tn = s.time();
  const double inv_dx2 = 1.0 / (g.spacing() * g.spacing());
  const detail::Stencil st(g);
  const Field& vn = s.level(0);
  const Field& vm1 = s.level(1);
  const bool have_m2 = s.levels_stored() >= 3;

  // Backward time derivative at level n, second order once three levels exist.
  Field vt;
  if (!form.is_zero()) {
    vt.assign(vn.size(), 0.0);
    const Field& vm2 = have_m2 ? s.level(2) : vm1;
    for (int c = 0; c < d; ++c) {
      const std::size_t off = static_cast<std::size_t>(c) * n;
      for_window(g, w, [&](std::size_t idx) {
        const std::size_t o = off + idx;
        vt[o] = have_m2 ? (3.0 * vn[o] - 4.0 * vm1[o] + vm2[o]) / (2.0 * dt)
                        : (vn[o] - vm1[o]) / dt;
      });
    }
  }

  CellJet jet;
  for_window(g, w, [&](std::size_t idx) {
    if (!cache.fluid[idx]) return;
    const Point x = g.center(idx);
    const Mat b = damping.eval(d, tn, x);
    Vec cur;
    Vec old;
    Vec lap;
    for (int i = 0; i < d; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * n;
      cur(i) = vn[off + idx];
      old(i) = vm1[off + idx];
      lap(i) = laplacian(cache, g.strides(), d, vn.data() + off, idx, inv_dx2);
    }
    Vec rest = Vec::Zero();
    Mat c00 = Mat::Zero();
    if (!form.is_zero()) {
      cell_jet(st, d, n, vn.data(), vt.data(), idx, jet);
      split_forcing(form, jet, d, rest, c00);
    }
    const Mat inertia = Mat::Identity() - c00;
    const Mat lhs = inertia + hdt * b;
    const Vec rhs = inertia * (2.0 * cur - old) + hdt * (b * old) + dt2 * (lap + rest);
    const Vec next = lhs.partialPivLu().solve(rhs);
    for (int i = 0; i < d; ++i) out[static_cast<std::size_t>(i) * n + idx] = next(i);
  });
}

double window_peak(const WaveState& s, const ActiveWindow& w, const Field& f) {
  double peak = 0.0;
  const std::size_t n = s.grid().size();
  for (int c = 0; c < s.ncomp(); ++c) {
    if (!s.component_active(c)) continue;
    const double* v = f.data() + static_cast<std::size_t>(c) * n;
    for_window(s.grid(), w, [&](std::size_t idx) {
      const double a = std::abs(v[idx]);
      peak = (a > peak || a != a) ? a : peak;
    });
  }
  return peak;
}

}  // namespace

void step(WaveState& s, const DampingField& damping, const NonlinearForm& form, double dt) {
  const ExteriorGrid& g = s.grid();
  if (dt != s.dt()) throw SolverError("dt differs from the time step of the state");
  if (dt > cfl_limit(g) * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "dt = " << dt << " exceeds the CFL limit " << cfl_limit(g);
    throw SolverError(os.str());
  }
  if (s.levels_stored() < 2) throw SolverError("state needs two time levels; use start_state");
  StepCache& cache = ensure_cache(s, damping);
  const ActiveWindow w = expand(g, s.window());
  Field& out = s.next_slot();
  const bool general = is_coupled(damping, form) ||
                       (form.has_semilinear() && form.kind != FormKind::kSpeedSemilinear);
  if (general) {
    for (int c = 0; c < s.ncomp(); ++c) s.set_component_active(c, true);
    if (g.dim() == 2) {
      general_kernel<2>(s, cache, w, damping, form, out);
    } else {
      general_kernel<3>(s, cache, w, damping, form, out);
    }
  } else {
    const double tau = damping.time_factor(s.time());
    const bool semi = form.kind == FormKind::kSpeedSemilinear && form.kappa != 0.0;
    const double coeff = form.kappa * form.lambda_factor;
    if (g.dim() == 2) {
      semi ? scalar_kernel<2, true>(s, cache, w, tau, coeff, out)
           : scalar_kernel<2, false>(s, cache, w, tau, coeff, out);
    } else {
      semi ? scalar_kernel<3, true>(s, cache, w, tau, coeff, out)
           : scalar_kernel<3, false>(s, cache, w, tau, coeff, out);
    }
  }
  s.commit_step();
  s.set_window(w);

  if (s.step_index() % 8 == 0 || s.step_index() < 8) {
    const double peak = window_peak(s, w, out);
    if (!std::isfinite(peak) ||
        (s.reference_peak > 0.0 && peak > 1e6 * s.reference_peak)) {
      std::ostringstream os;
      os << "instability at t = " << s.time() << ": max |v| = " << peak
         << " vs initial peak " << s.reference_peak;
      throw InstabilityError(os.str());
    }
  }
}

double leapfrog_energy(const WaveState& s) {
  if (s.levels_stored() < 2) throw SolverError("leapfrog energy needs two levels");
  const ExteriorGrid& g = s.grid();
  const std::size_t n = g.size();
  const auto& st = g.strides();
  const int d = g.dim();
  const double dt = s.dt();
  const double inv_dx2 = 1.0 / (g.spacing() * g.spacing());
  const auto& extra = g.diagonal_extra();
  const Field& a = s.level(0);
  const Field& b = s.level(1);
  CompensatedSum acc;
  for (int c = 0; c < s.ncomp(); ++c) {
    const double* va = a.data() + static_cast<std::size_t>(c) * n;
    const double* vb = b.data() + static_cast<std::size_t>(c) * n;
    for (std::size_t idx : g.fluid_cells()) {
      if (va[idx] == 0.0 && vb[idx] == 0.0) continue;
      const double vel = (va[idx] - vb[idx]) / dt;
      double sum = 0.0;
      for (int ax = 0; ax < d; ++ax) sum += vb[idx + st[ax]] + vb[idx - st[ax]];
      const double minus_lap = ((2.0 * d + extra[idx]) * vb[idx] - sum) * inv_dx2;
      acc += 0.5 * vel * vel + 0.5 * va[idx] * minus_lap;
    }
  }
  return acc.value() * g.cell_volume();
}

double support_radius(const WaveState& s, double threshold) {
  const ExteriorGrid& g = s.grid();
  const std::size_t n = g.size();
  const int c = std::min(s.center_back(), s.levels_stored() - 1);
  const Field& v = s.level(c);
  const Field* newer = c >= 1 ? &s.level(c - 1) : nullptr;
  const Field* older = c + 1 < s.levels_stored() ? &s.level(c + 1) : nullptr;
  double r2 = 0.0;
  for_window(g, s.window(), [&](std::size_t idx) {
    if (!g.is_fluid(idx)) return;
    bool hit = false;
    for (int q = 0; q < s.ncomp() && !hit; ++q) {
      const std::size_t o = static_cast<std::size_t>(q) * n + idx;
      double vt = 0.0;
      if (newer && older) {
        vt = ((*newer)[o] - (*older)[o]) / (2.0 * s.dt());
      } else if (newer) {
        vt = ((*newer)[o] - v[o]) / s.dt();
      } else if (older) {
        vt = (v[o] - (*older)[o]) / s.dt();
      }
      hit = std::abs(v[o]) > threshold || std::abs(vt) > threshold;
    }
    if (hit) {
      const Point x = g.center(idx);
      r2 = std::max(r2, dot(x, x));
    }
  });
  return std::sqrt(r2);
}

WaveState make_synthetic_state(const ExteriorGrid& grid, double dt, int mu_max, long first_index,
                               const std::function<std::array<double, 3>(double, const Point&)>& f) {
  WaveState s(grid, dt, mu_max);
  const std::size_t n = grid.size();
  const int d = grid.dim();
  std::vector<Field> levels;
  for (int k = 0; k < s.history_depth(); ++k) {
    const double t = static_cast<double>(first_index + k) * dt;
    Field lv(n * static_cast<std::size_t>(d), 0.0);
    for (std::size_t idx : grid.fluid_cells()) {
      const auto val = f(t, grid.center(idx));
      for (int c = 0; c < d; ++c) lv[static_cast<std::size_t>(c) * n + idx] = val[static_cast<std::size_t>(c)];
    }
    levels.push_back(std::move(lv));
  }
  s.set_levels(first_index, std::move(levels));
  s.widen_window_to_all();
  return s;
}

std::uint64_t state_hash(const WaveState& s) {
  std::uint64_t h = 1469598103934665603ull;
  if (s.levels_stored() == 0) return h;
  const Field& f = s.level(0);
  for (double v : f) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace dissipwave
