#include "dissipwave/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "dissipwave/summation.hpp"
#include "stencil.hpp"
#include "window.hpp"

namespace dissipwave {

double compute_C0(const C0Inputs& in) {
  const double c1 = std::max(in.C1, 0.25);
  const double d = in.dim;
  return std::max({4.0 * in.b0 * in.R + c1 * in.b0 * (2.0 * d - 1.0) / 2.0, d,
                   8.0 * in.B_sup * in.b0 * in.R * in.R});
}

double bar_C(double C0, double lambda, double b0, int dim) {
  return C0 / lambda + b0 * (2.0 * dim - 1.0) / 4.0 + 1.0;
}

FunctionalContext make_context(const DampingField& damping, const NonlinearForm& form, double C0) {
  FunctionalContext ctx;
  ctx.damping = damping;
  ctx.multiplier = MultiplierField{damping.model.b0, damping.model.R, damping.lambda};
  ctx.form = form;
  ctx.C0 = C0;
  return ctx;
}

std::vector<double> central_weights(int order) {
  if (order < 0) throw std::invalid_argument("derivative order must be nonnegative");
  const int half = (order + 1) / 2;
  const int npts = 2 * half + 1;
  // Fornberg's recurrence at x0 = 0 on nodes -half..half.
  std::vector<double> nodes(static_cast<std::size_t>(npts));
  for (int k = 0; k < npts; ++k) nodes[static_cast<std::size_t>(k)] = k - half;
  const int M = order;
  std::vector<std::vector<double>> c(static_cast<std::size_t>(npts),
                                     std::vector<double>(static_cast<std::size_t>(M + 1), 0.0));
  c[0][0] = 1.0;
  double c1 = 1.0;
  for (int i = 1; i < npts; ++i) {
    double c2 = 1.0;
    const auto ui = static_cast<std::size_t>(i);
    for (int j = 0; j < i; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double c3 = nodes[ui] - nodes[uj];
      c2 *= c3;
      for (int m = std::min(i, M); m >= 0; --m) {
        const auto um = static_cast<std::size_t>(m);
        const double prev = m > 0 ? c[ui - 1][um - 1] : 0.0;
        if (j == i - 1) c[ui][um] = c1 * (m * prev - nodes[ui - 1] * c[ui - 1][um]) / c2;
      }
      for (int m = std::min(i, M); m >= 0; --m) {
        const auto um = static_cast<std::size_t>(m);
        c[uj][um] = (nodes[ui] * c[uj][um] - (m > 0 ? m * c[uj][um - 1] : 0.0)) / c3;
      }
    }
    c1 = c2;
  }
  std::vector<double> w(static_cast<std::size_t>(npts));
  for (int k = 0; k < npts; ++k) w[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)][static_cast<std::size_t>(M)];
  return w;
}

namespace {

using detail::expand;
using detail::for_window;
using detail::for_window_rows;
using detail::Stencil;

/// Centered time derivatives d_t^mu v, mu = 0..orders, of the active
/// components at the ring center; inactive components stay empty.
struct TimeDerivatives {
  const ExteriorGrid* grid = nullptr;
  int ncomp = 0;
  int orders = 0;
  ActiveWindow window;
  std::vector<std::vector<Field>> T;  // T[c][mu]

  [[nodiscard]] bool active(int c) const { return !T[static_cast<std::size_t>(c)].empty(); }
  [[nodiscard]] const double* at(int c, int mu) const {
    return T[static_cast<std::size_t>(c)][static_cast<std::size_t>(mu)].data();
  }
};

void require_primed(const WaveState& s) {
  if (!s.primed()) throw HistoryError("functionals need a primed history ring");
}

TimeDerivatives time_derivatives(const WaveState& s, int orders) {
  require_primed(s);
  const ExteriorGrid& g = s.grid();
  const std::size_t n = g.size();
  TimeDerivatives td;
  td.grid = &g;
  td.ncomp = s.ncomp();
  td.orders = orders;
  td.window = s.window();
  td.T.resize(static_cast<std::size_t>(s.ncomp()));
  const int center = s.center_back();
  for (int c = 0; c < s.ncomp(); ++c) {
    if (!s.component_active(c)) continue;
    auto& fields = td.T[static_cast<std::size_t>(c)];
    for (int mu = 0; mu <= orders; ++mu) {
      const auto w = central_weights(mu);
      const int half = static_cast<int>(w.size() / 2);
      if (half > center) throw HistoryError("ring too short for the requested time derivative");
      const double scale = 1.0 / std::pow(s.dt(), mu);
      Field f(n, 0.0);
      std::vector<const double*> lv;
      std::vector<double> wk;
      for (int k = -half; k <= half; ++k) {
        const double wt = w[static_cast<std::size_t>(k + half)];
        if (wt == 0.0) continue;
        lv.push_back(s.component(s.level(center - k), c));
        wk.push_back(wt * scale);
      }
      for_window(g, td.window, [&](std::size_t idx) {
        double acc = 0.0;
        for (std::size_t q = 0; q < lv.size(); ++q) acc += wk[q] * lv[q][idx];
        f[idx] = acc;
      });
      fields.push_back(std::move(f));
    }
  }
  return td;
}

/// Sums over distinct multi-indices alpha, 1 <= |alpha| <= K, of ||d^alpha f||^2,
/// by order: out[k] += ... . Axes are applied in nondecreasing order so each
/// multi-index is visited once. The first difference uses the Dirichlet ghost
/// when `dirichlet` is set; later ones are one-sided at the boundary.
void derivative_tower(const Stencil& st, const double* f, const ActiveWindow& w, int K,
                      bool dirichlet, int min_axis, int depth, std::vector<Field>& buf,
                      std::vector<CompensatedSum>& out) {
  const ExteriorGrid& g = *st.grid;
  const ActiveWindow wd = expand(g, w);
  for (int a = min_axis; a < st.dim; ++a) {
    const bool store = depth + 1 < K;
    double* dst = store ? buf[static_cast<std::size_t>(depth)].data() : nullptr;
    CompensatedSum acc;
    const bool ghosted = depth == 0 && dirichlet;
    for_window_rows(g, wd, [&](std::size_t base, int lo, int hi) {
      double row = 0.0;
      for (int k = lo; k <= hi; ++k) {
        const std::size_t idx = base + static_cast<std::size_t>(k);
        double v = 0.0;
        if (st.fluid(idx)) v = ghosted ? st.d1(f, idx, a) : st.d1_free(f, idx, a);
        if (store) dst[idx] = v;
        row += v * v;
      }
      acc += row;
    });
    out[static_cast<std::size_t>(depth + 1)].merge(acc);
    if (store) derivative_tower(st, dst, wd, K, dirichlet, a, depth + 1, buf, out);
  }
}

/// Per-order pieces of the H^m norms, scaled by the cell volume:
/// grad[mu][k] = sum_a sum_{|alpha|=k} ||d^alpha d_a T_mu||^2 (k = 0 face based),
/// plain[mu][k] = sum_{|alpha|=k} ||d^alpha T_mu||^2.
struct NormTables {
  std::vector<std::vector<double>> grad;
  std::vector<std::vector<double>> plain;
};

NormTables norm_tables(const TimeDerivatives& td, int mu_max) {
  const ExteriorGrid& g = *td.grid;
  const Stencil st(g);
  const double vol = g.cell_volume();
  NormTables nt;
  nt.grad.assign(static_cast<std::size_t>(mu_max + 1), {});
  nt.plain.assign(static_cast<std::size_t>(mu_max + 2), {});
  std::vector<Field> buf;
  const int max_depth = mu_max + 1;
  auto buffers = [&](int count) {
    while (static_cast<int>(buf.size()) < count) buf.emplace_back(g.size(), 0.0);
  };
  for (int mu = 0; mu <= mu_max; ++mu) {
    const int K = mu_max - mu;
    std::vector<CompensatedSum> gsum(static_cast<std::size_t>(K + 1));
    std::vector<CompensatedSum> psum(static_cast<std::size_t>(K + 1));
    for (int c = 0; c < td.ncomp; ++c) {
      if (!td.active(c)) continue;
      gsum[0] += detail::gradient_norm_sq(g, td.at(c, mu)) / vol;
      if (K > 0) {
        buffers(max_depth);
        // Gradient component a, then its tower of one-sided differences.
        for (int a = 0; a < st.dim; ++a) {
          Field& ga = buf[static_cast<std::size_t>(max_depth - 1)];
          const double* f = td.at(c, mu);
          const ActiveWindow w1 = expand(g, td.window);
          for_window(g, w1, [&](std::size_t idx) { ga[idx] = st.fluid(idx) ? st.d1(f, idx, a) : 0.0; });
          std::vector<CompensatedSum> tmp(static_cast<std::size_t>(K + 1));
          derivative_tower(st, ga.data(), w1, K, false, 0, 0, buf, tmp);
          for (int k = 1; k <= K; ++k) gsum[static_cast<std::size_t>(k)].merge(tmp[static_cast<std::size_t>(k)]);
        }
      }
      const double* f1 = td.at(c, mu + 1);
      psum[0] += detail::l2_norm_sq(g, f1) / vol;
      if (K > 0) {
        buffers(max_depth);
        derivative_tower(st, f1, td.window, K, true, 0, 0, buf, psum);
      }
    }
    auto& gr = nt.grad[static_cast<std::size_t>(mu)];
    auto& pl = nt.plain[static_cast<std::size_t>(mu + 1)];
    for (int k = 0; k <= K; ++k) {
      gr.push_back(gsum[static_cast<std::size_t>(k)].value() * vol);
      pl.push_back(psum[static_cast<std::size_t>(k)].value() * vol);
    }
  }
  return nt;
}

std::vector<double> z_values(const NormTables& nt, int mu_max) {
  std::vector<double> z(static_cast<std::size_t>(mu_max + 1), 0.0);
  for (int m = 0; m <= mu_max; ++m) {
    CompensatedSum acc;
    for (int mu = 0; mu <= mu_max - m; ++mu) {
      for (int k = 0; k <= m; ++k) {
        acc += nt.grad[static_cast<std::size_t>(mu)][static_cast<std::size_t>(k)];
        acc += nt.plain[static_cast<std::size_t>(mu + 1)][static_cast<std::size_t>(k)];
      }
    }
    z[static_cast<std::size_t>(m)] = acc.value();
  }
  return z;
}

struct WeightedTerms {
  double cross = 0.0;        // sum_mu <d_t^{mu+1} v, d_t^mu v>
  double damping_form = 0.0; // sum_mu <d_t^mu v, B d_t^mu v>
  double multiplier = 0.0;   // sum_mu <d_t^{mu+1} v, [h; grad d_t^mu v]>
  double correction = 0.0;   // the bracket multiplying bar C in G tilde
};

WeightedTerms weighted_terms(const WaveState& s, const TimeDerivatives& td,
                             const FunctionalContext& ctx) {
  const ExteriorGrid& g = s.grid();
  const Stencil st(g);
  const int d = g.dim();
  const int mu_max = s.mu_max();
  const double t = s.center_time();
  const bool scalar = ctx.damping.is_scalar();
  const double tau = ctx.damping.time_factor(t);
  const bool quasi = ctx.form.has_quasilinear();
  CompensatedSum cross;
  CompensatedSum bform;
  CompensatedSum mult;
  CompensatedSum corr;
  double cross_row = 0.0;
  double bform_row = 0.0;
  double mult_row = 0.0;
  double corr_row = 0.0;
  const int inner = d - 1;
  const auto cell = [&](std::size_t idx, const Point& x) {
    const Point h = ctx.multiplier.h(x);
    double bs = 0.0;
    SmallMatrix bm;
    if (scalar) {
      bs = ctx.damping.spatial_factor(x) * tau;
    } else {
      bm = ctx.damping.eval(d, t, x);
    }
    CoefTensor c;
    if (quasi) {
      Jet xi;
      xi.dim = d;
      for (int i = 0; i < d; ++i) {
        if (!td.active(i)) continue;
        xi.at(i, 0) = td.at(i, 1)[idx];
        for (int a = 1; a <= d; ++a) xi.at(i, a) = st.d1(td.at(i, 0), idx, a - 1);
      }
      c = ctx.form.coefficients(xi);
    }
    for (int mu = 0; mu <= mu_max; ++mu) {
      // D[i][a]: a = 0 is d_t^{mu+1} v^i, a >= 1 the spatial gradient of d_t^mu v^i.
      double D[3][4] = {};
      double P[3] = {};
      double HG[3] = {};
      for (int i = 0; i < d; ++i) {
        if (!td.active(i)) continue;
        const double* f = td.at(i, mu);
        P[i] = f[idx];
        D[i][0] = td.at(i, mu + 1)[idx];
        double hg = 0.0;
        for (int a = 0; a < d; ++a) {
          D[i][a + 1] = st.d1(f, idx, a);
          hg += h[static_cast<std::size_t>(a)] * D[i][a + 1];
        }
        HG[i] = hg;
        cross_row += D[i][0] * P[i];
        mult_row += D[i][0] * hg;
        if (scalar) bform_row += bs * P[i] * P[i];
      }
      if (!scalar) {
        double q = 0.0;
        for (int i = 0; i < d; ++i) {
          for (int j = 0; j < d; ++j) q += P[i] * bm(i, j) * P[j];
        }
        bform_row += q;
      }
      if (quasi) {
        double acc = 0.0;
        for (int i = 0; i < d; ++i) {
          for (int j = 0; j < d; ++j) {
            for (int a = 1; a <= d; ++a) {
              for (int b = 1; b <= d; ++b) acc += 0.5 * D[i][a] * D[j][b] * c.at(i, j, a, b);
            }
            acc -= 0.5 * D[i][0] * D[j][0] * c.at(i, j, 0, 0);
            for (int b = 0; b <= d; ++b) acc -= (P[i] + HG[i]) * D[j][b] * c.at(i, j, 0, b);
          }
        }
        corr_row += acc;
      }
    }
  };
  for_window_rows(g, td.window, [&](std::size_t base, int lo, int hi) {
    cross_row = bform_row = mult_row = corr_row = 0.0;
    Point x = g.center(base + static_cast<std::size_t>(lo));
    for (int k = lo; k <= hi; ++k) {
      const std::size_t idx = base + static_cast<std::size_t>(k);
      if (!st.fluid(idx)) continue;
      x[static_cast<std::size_t>(inner)] = g.coordinate(k);
      cell(idx, x);
    }
    cross += cross_row;
    bform += bform_row;
    mult += mult_row;
    corr += corr_row;
  });
  const double vol = g.cell_volume();
  return {cross.value() * vol, bform.value() * vol, mult.value() * vol, corr.value() * vol};
}

double flux_from(const WaveState& s, const TimeDerivatives& td, const MultiplierField& mult) {
  const ExteriorGrid& g = s.grid();
  const int d = g.dim();
  const double dx = g.spacing();
  CompensatedSum acc;
  for (const BoundaryFace& face : g.boundary_faces()) {
    // Each surface element is taken once, from the crossing along its
    // dominant normal axis, with the projected area dx^{d-1}/|sigma_a|.
    int dominant = 0;
    for (int a = 1; a < d; ++a) {
      if (std::abs(face.sigma[static_cast<std::size_t>(a)]) >
          std::abs(face.sigma[static_cast<std::size_t>(dominant)]))
        dominant = a;
    }
    if (face.axis != dominant) continue;
    const double sa = std::abs(face.sigma[static_cast<std::size_t>(face.axis)]);
    const double area = std::pow(dx, d - 1) / sa;
    const double h_sigma = dot(mult.h(face.x), face.sigma);
    const double theta = std::max(face.theta, ExteriorGrid::kMinGhostTheta);
    double grad_sq = 0.0;
    for (int c = 0; c < td.ncomp; ++c) {
      if (!td.active(c)) continue;
      for (int mu = 0; mu <= s.mu_max(); ++mu) {
        // f vanishes on the surface, so grad f is normal and
        // sigma . grad f = d_axis f / sigma_axis.
        const double along = td.at(c, mu)[face.cell] / (theta * dx);
        const double normal = along / sa;
        grad_sq += normal * normal;
      }
    }
    acc += area * h_sigma * grad_sq;
  }
  return acc.value();
}

double v_norm_sq(const TimeDerivatives& td) {
  double s = 0.0;
  for (int c = 0; c < td.ncomp; ++c) {
    if (td.active(c)) s += detail::l2_norm_sq(*td.grid, td.at(c, 0));
  }
  return s;
}

}  // namespace

FunctionalReport evaluate_functionals(const WaveState& state, const FunctionalContext& ctx) {
  const int mu_max = state.mu_max();
  const int d = state.grid().dim();
  const TimeDerivatives td = time_derivatives(state, mu_max + 1);
  FunctionalReport r;
  r.t = state.center_time();
  const NormTables nt = norm_tables(td, mu_max);
  r.E = 0.5 * (nt.plain[1][0] + nt.grad[0][0]);
  r.Z = z_values(nt, mu_max);
  r.Z_total = compensated_total(r.Z);
  const WeightedTerms wt = weighted_terms(state, td, ctx);
  const double b0 = ctx.damping.model.b0;
  const double lambda = ctx.damping.lambda;
  r.damping_form = wt.damping_form;
  r.G = ctx.C0 / (2.0 * lambda) * r.Z[0] + b0 * (2.0 * d - 1.0) / 4.0 * wt.cross +
        b0 * (2.0 * d - 1.0) / 8.0 * wt.damping_form + wt.multiplier;
  r.G_tilde = r.G;
  if (ctx.form.has_quasilinear()) r.G_tilde += bar_C(ctx.C0, lambda, b0, d) * wt.correction;
  r.boundary_flux = flux_from(state, td, ctx.multiplier);
  r.weighted_L2_of_data = ctx.weighted_data_norm;
  r.v_norm_sq = v_norm_sq(td);
  const double denom = r.v_norm_sq + r.Z[0];
  r.comparability_ratio = denom > 0.0 ? r.G_tilde / denom : 0.0;
  r.G_lower_bound =
      b0 * ctx.damping.model.R / lambda * r.Z[0] + b0 * (2.0 * d - 1.0) / 16.0 * wt.damping_form;
  return r;
}

double compute_energy(const WaveState& state) {
  const TimeDerivatives td = time_derivatives(state, 1);
  double s = 0.0;
  for (int c = 0; c < td.ncomp; ++c) {
    if (!td.active(c)) continue;
    s += detail::l2_norm_sq(state.grid(), td.at(c, 1));
    s += detail::gradient_norm_sq(state.grid(), td.at(c, 0));
  }
  return 0.5 * s;
}

double compute_Zm(const WaveState& state, int m) {
  if (m < 0 || m > state.mu_max()) throw std::invalid_argument("Z_m index out of range");
  const TimeDerivatives td = time_derivatives(state, state.mu_max() + 1);
  return z_values(norm_tables(td, state.mu_max()), state.mu_max())[static_cast<std::size_t>(m)];
}

double compute_G(const WaveState& state, const FunctionalContext& ctx) {
  FunctionalContext linear = ctx;
  linear.form = catalog::zero();
  return evaluate_functionals(state, linear).G;
}

double compute_G_tilde(const WaveState& state, const FunctionalContext& ctx) {
  return evaluate_functionals(state, ctx).G_tilde;
}

double boundary_flux(const WaveState& state, const MultiplierField& multiplier) {
  const TimeDerivatives td = time_derivatives(state, state.mu_max());
  return flux_from(state, td, multiplier);
}

// ---------------------------------------------------------------------------
// Poincare-type inequality

double poincare_proof_constant(double b0, double R) {
  // rho = 1 - S((|x| - 1) / (1/2)) with the quintic smoothstep S; its slope
  // peaks at S'(1/2) / (1/2).
  const double grad_rho = smoothstep5_derivative(0.5) / 0.5;
  return std::max((4.0 * R * R * grad_rho * grad_rho + 1.0) / b0, 4.0 * R * R);
}

namespace {

Point random_direction(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Point p{0.0, 0.0, 0.0};
  double n = 0.0;
  while (n < 1e-12) {
    for (int a = 0; a < dim; ++a) p[static_cast<std::size_t>(a)] = gauss(rng);
    n = norm(p);
  }
  for (double& v : p) v /= n;
  return p;
}

Field bump_field(const ExteriorGrid& g, const Point& center, double radius) {
  Field f(g.size(), 0.0);
  for (std::size_t idx : g.fluid_cells()) {
    Point x = g.center(idx);
    for (int a = 0; a < 3; ++a) x[static_cast<std::size_t>(a)] -= center[static_cast<std::size_t>(a)];
    f[idx] = bump_profile(norm(x) / radius);
  }
  return f;
}

}  // namespace

PoincareReport poincare_audit(const ExteriorGrid& grid, const DampingModel& model, double lambda,
                              int trial_count, std::uint64_t seed, double t_eval) {
  if (trial_count < 1) throw std::invalid_argument("poincare_audit: trial_count must be >= 1");
  PoincareReport rep;
  rep.C_proof = poincare_proof_constant(model.b0, model.R);
  rep.C_min = std::numeric_limits<double>::infinity();
  const DampingField field{model, lambda};
  const int d = grid.dim();
  const double kink = model.R / lambda;
  const double box = grid.extent() - 2.0 * grid.spacing();
  const double inner = grid.obstacle().bounding_radius();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> b11(grid.size(), 0.0);
  for (std::size_t idx : grid.fluid_cells()) b11[idx] = field.eval(d, t_eval, grid.center(idx))(0, 0);

  bool holds = true;
  for (int k = 0; k < trial_count; ++k) {
    PoincareTrial tr;
    tr.far_field = k % 2 == 0;
    const Point dir = random_direction(rng, d);
    if (tr.far_field) {
      // Support inside {|x| >= R/lambda}.
      const double room = 0.5 * (box - kink);
      if (room <= 2.0 * grid.spacing()) {
        ++rep.trials_skipped;
        continue;
      }
      tr.radius = room * (0.3 + 0.7 * unif(rng));
      const double r = kink + tr.radius + (box - kink - 2.0 * tr.radius) * unif(rng);
      for (int a = 0; a < 3; ++a) tr.center[static_cast<std::size_t>(a)] = r * dir[static_cast<std::size_t>(a)];
    } else {
      const double r = inner + (std::min(kink, box) - inner) * unif(rng);
      for (int a = 0; a < 3; ++a) tr.center[static_cast<std::size_t>(a)] = r * dir[static_cast<std::size_t>(a)];
      const double room = box - r;
      tr.radius = std::max(4.0 * grid.spacing(), std::min(room, 2.0 * kink) * (0.2 + 0.8 * unif(rng)));
    }
    const Field f = bump_field(grid, tr.center, tr.radius);
    const double l2 = detail::l2_norm_sq(grid, f.data());
    if (l2 == 0.0) {
      ++rep.trials_skipped;
      continue;
    }
    const double grad = detail::gradient_norm_sq(grid, f.data());
    CompensatedSum bacc;
    for (std::size_t idx : grid.fluid_cells()) bacc += b11[idx] * f[idx] * f[idx];
    const double bf = bacc.value() * grid.cell_volume();
    tr.C = l2 / (bf / lambda + grad / (lambda * lambda));
    const double rhs_proof = rep.C_proof * (bf / lambda + grad / (lambda * lambda));
    if (l2 > rhs_proof * (1.0 + 1e-12)) holds = false;
    rep.C1_measured = std::max(rep.C1_measured, tr.C);
    rep.C_min = std::min(rep.C_min, tr.C);
    rep.trials.push_back(tr);
    ++rep.trials_run;
  }
  if (rep.trials_run == 0) rep.C_min = 0.0;
  rep.proof_constant_holds = holds && rep.trials_run > 0;
  return rep;
}

// ---------------------------------------------------------------------------
// Hardy and Gagliardo-Nirenberg

HardyReport hardy_gn_audit(const ExteriorGrid& grid, const WeightD0& weight, int trial_count,
                           std::uint64_t seed, double q) {
  const int d = grid.dim();
  if (d < 2) throw std::invalid_argument("hardy_gn_audit: dimension must be >= 2");
  HardyReport rep;
  rep.q = q > 0.0 ? q : (d == 3 ? 2.0 : 1.0);
  if (!(rep.q < d)) throw std::invalid_argument("hardy_gn_audit: need q < d");
  rep.r = 1.0 / (1.0 / rep.q - 1.0 / d);
  const Stencil st(grid);
  const double E = grid.extent();
  const double inner = grid.obstacle().bounding_radius();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Field f(grid.size(), 0.0);
  for (int k = 0; k < trial_count; ++k) {
    const bool radial = k % 2 == 0;
    const double width = radial ? (inner + (E / 3.0 - inner) * unif(rng)) : (0.5 + (E / 4.0) * unif(rng));
    Point center{0.0, 0.0, 0.0};
    if (!radial) {
      const Point dir = random_direction(rng, d);
      const double r = inner + 0.5 * (E - inner) * unif(rng);
      for (int a = 0; a < 3; ++a) center[static_cast<std::size_t>(a)] = r * dir[static_cast<std::size_t>(a)];
    }
    for (std::size_t idx : grid.fluid_cells()) {
      const Point x = grid.center(idx);
      Point y = x;
      for (int a = 0; a < 3; ++a) y[static_cast<std::size_t>(a)] -= center[static_cast<std::size_t>(a)];
      // Gaussian with a smooth cutoff well inside the box.
      const double cut = 1.0 - smoothstep5((norm(x) - 0.6 * E) / (0.3 * E));
      f[idx] = radial ? std::exp(-dot(y, y) / (width * width)) * cut
                      : bump_profile(norm(y) / width) * cut;
    }
    const double grad2 = detail::gradient_norm_sq(grid, f.data());
    if (grad2 == 0.0) continue;
    CompensatedSum weighted;
    CompensatedSum lr;
    CompensatedSum lq;
    for (std::size_t idx : grid.fluid_cells()) {
      const double v = f[idx];
      const double w = weight(grid.center(idx));
      weighted += (v / w) * (v / w);
      lr += std::pow(std::abs(v), rep.r);
      double g2 = 0.0;
      for (int a = 0; a < d; ++a) {
        const double ga = st.d1(f.data(), idx, a);
        g2 += ga * ga;
      }
      lq += std::pow(g2, 0.5 * rep.q);
    }
    const double vol = grid.cell_volume();
    const double hardy = std::sqrt(weighted.value() * vol / grad2);
    const double gn = std::pow(lr.value() * vol, 1.0 / rep.r) / std::pow(lq.value() * vol, 1.0 / rep.q);
    rep.hardy_ratio_max = std::max(rep.hardy_ratio_max, hardy);
    rep.gn_ratio_max = std::max(rep.gn_ratio_max, gn);
    ++rep.trials_run;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Nonlinear term bounds

namespace {

/// First-order jet at ring offset `back` from the newest level; the time
/// column is the centered difference of the neighboring levels.
Jet jet_at(const WaveState& s, const Stencil& st, int back, std::size_t idx) {
  Jet xi;
  const int d = st.dim;
  xi.dim = d;
  const double inv2dt = 1.0 / (2.0 * s.dt());
  for (int i = 0; i < d; ++i) {
    if (!s.component_active(i)) continue;
    const double* v = s.component(s.level(back), i);
    xi.at(i, 0) = (s.component(s.level(back - 1), i)[idx] - s.component(s.level(back + 1), i)[idx]) * inv2dt;
    for (int a = 1; a <= d; ++a) xi.at(i, a) = st.d1(v, idx, a - 1);
  }
  return xi;
}

double field_norm(const ExteriorGrid& g, const std::vector<Field>& comps) {
  double s = 0.0;
  for (const Field& f : comps) s += detail::l2_norm_sq(g, f.data());
  return std::sqrt(s);
}

}  // namespace

NonlinearBoundReport nonlinear_bound_audit(const WaveState& state, const NonlinearForm& form) {
  require_primed(state);
  NonlinearBoundReport rep;
  if (state.mu_max() < 1) throw HistoryError("nonlinear bound audit needs mu_max >= 1");
  const ExteriorGrid& g = state.grid();
  const Stencil st(g);
  const int d = g.dim();
  const std::size_t n = g.size();
  const TimeDerivatives td = time_derivatives(state, state.mu_max() + 1);
  const auto z = z_values(norm_tables(td, state.mu_max()), state.mu_max());
  rep.Z = compensated_total(z);
  if (!(rep.Z > 0.0)) {
    rep.skipped = true;
    return rep;
  }
  const int center = state.center_back();
  const ActiveWindow w = td.window;
  const ActiveWindow w1 = expand(g, w);
  const double inv2dt = 1.0 / (2.0 * state.dt());

  if (form.has_semilinear()) {
    // F at the center and its two neighbors in time.
    std::array<std::vector<Field>, 3> F;
    for (int k = 0; k < 3; ++k) {
      F[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(d), Field(n, 0.0));
      for_window(g, w, [&](std::size_t idx) {
        if (!st.fluid(idx)) return;
        const Vec3 val = form.semilinear_part(jet_at(state, st, center + 1 - k, idx));
        for (int i = 0; i < d; ++i) F[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)][idx] = val[static_cast<std::size_t>(i)];
      });
    }
    double best = field_norm(g, F[1]);
    std::vector<Field> deriv(static_cast<std::size_t>(d), Field(n, 0.0));
    for (int i = 0; i < d; ++i) {
      auto& out = deriv[static_cast<std::size_t>(i)];
      for_window(g, w, [&](std::size_t idx) {
        out[idx] = (F[2][static_cast<std::size_t>(i)][idx] - F[0][static_cast<std::size_t>(i)][idx]) * inv2dt;
      });
    }
    best = std::max(best, field_norm(g, deriv));
    for (int a = 0; a < d; ++a) {
      for (int i = 0; i < d; ++i) {
        auto& out = deriv[static_cast<std::size_t>(i)];
        const double* f = F[1][static_cast<std::size_t>(i)].data();
        for_window(g, w1, [&](std::size_t idx) { out[idx] = st.fluid(idx) ? st.d1_free(f, idx, a) : 0.0; });
      }
      best = std::max(best, field_norm(g, deriv));
    }
    rep.ratio_A1 = best / rep.Z;
  }

  if (form.has_quasilinear()) {
    // d^alpha v^i for space-time multi-indices |alpha| <= 2.
    std::vector<std::vector<Field>> dv(static_cast<std::size_t>(d));
    const ActiveWindow w2 = expand(g, w, 2);
    for (int i = 0; i < d; ++i) {
      auto& list = dv[static_cast<std::size_t>(i)];
      if (!td.active(i)) continue;
      list.push_back(td.T[static_cast<std::size_t>(i)][0]);
      list.push_back(td.T[static_cast<std::size_t>(i)][1]);
      list.push_back(td.T[static_cast<std::size_t>(i)][2]);
      for (int a = 0; a < d; ++a) {
        Field fx(n, 0.0);
        Field ftx(n, 0.0);
        for_window(g, w1, [&](std::size_t idx) {
          if (!st.fluid(idx)) return;
          fx[idx] = st.d1(td.at(i, 0), idx, a);
          ftx[idx] = st.d1(td.at(i, 1), idx, a);
        });
        for (int b = a; b < d; ++b) {
          Field fxx(n, 0.0);
          for_window(g, w2, [&](std::size_t idx) {
            if (st.fluid(idx)) fxx[idx] = st.d1_free(fx.data(), idx, b);
          });
          list.push_back(std::move(fxx));
        }
        list.push_back(std::move(fx));
        list.push_back(std::move(ftx));
      }
    }
    // Coefficients at three time levels, entry-major.
    const int ne = d * d * (d + 1) * (d + 1);
    auto entry = [&](int i, int j, int a, int b) { return ((i * d + j) * (d + 1) + a) * (d + 1) + b; };
    std::array<std::vector<Field>, 3> C;
    for (int k = 0; k < 3; ++k) {
      C[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(ne), Field(n, 0.0));
      for_window(g, w, [&](std::size_t idx) {
        if (!st.fluid(idx)) return;
        const CoefTensor c = form.coefficients(jet_at(state, st, center + 1 - k, idx));
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j)
            for (int a = 0; a <= d; ++a)
              for (int b = 0; b <= d; ++b)
                C[static_cast<std::size_t>(k)][static_cast<std::size_t>(entry(i, j, a, b))][idx] = c.at(i, j, a, b);
      });
    }
    const double vol = g.cell_volume();
    double best = 0.0;
    Field beta(n, 0.0);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        for (int a = 0; a <= d; ++a) {
          for (int b = 0; b <= d; ++b) {
            const auto e = static_cast<std::size_t>(entry(i, j, a, b));
            for (int kind = 0; kind <= d + 1; ++kind) {
              // kind 0: c itself, 1: d_t c, 2..: d_x c.
              const double* cf = C[1][e].data();
              for_window(g, w2, [&](std::size_t idx) { beta[idx] = 0.0; });
              if (kind == 0) {
                beta = C[1][e];
              } else if (kind == 1) {
                for_window(g, w, [&](std::size_t idx) { beta[idx] = (C[2][e][idx] - C[0][e][idx]) * inv2dt; });
              } else {
                for_window(g, w1, [&](std::size_t idx) { beta[idx] = st.fluid(idx) ? st.d1_free(cf, idx, kind - 2) : 0.0; });
              }
              for (const Field& a_field : dv[static_cast<std::size_t>(i)]) {
                CompensatedSum acc;
                for_window(g, w2, [&](std::size_t idx) {
                  const double p = a_field[idx] * beta[idx];
                  acc += p * p;
                });
                best = std::max(best, std::sqrt(acc.value() * vol));
              }
            }
          }
        }
      }
    }
    rep.ratio_A2 = best / rep.Z;
  }
  return rep;
}

}  // namespace dissipwave
