#pragma once

#include <cstddef>

#include "dissipwave/geometry.hpp"
#include "dissipwave/summation.hpp"

namespace dissipwave::detail {

/// Neighbor access with the Dirichlet ghost substituted for obstacle cells.
struct Stencil {
  const ExteriorGrid* grid;
  const CellKind* kinds;
  int dim;
  std::array<std::size_t, 3> stride;
  double dx;

  explicit Stencil(const ExteriorGrid& g)
      : grid(&g), kinds(g.kinds().data()), dim(g.dim()), stride(g.strides()), dx(g.spacing()) {}

  [[nodiscard]] bool fluid(std::size_t idx) const {
    return kinds[idx] == CellKind::kFluid || kinds[idx] == CellKind::kBoundaryFluid;
  }

  [[nodiscard]] double ghost_factor(std::size_t idx, int axis, int side) const {
    const int slot = grid->ghost_slot(idx);
    if (slot < 0) return 0.0;
    return grid->ghost_links()[static_cast<std::size_t>(slot)]
        .ghost_factor[static_cast<std::size_t>(2 * axis + (side > 0 ? 1 : 0))];
  }

  [[nodiscard]] double ghost(const double* f, std::size_t idx, int axis, int side) const {
    return ghost_factor(idx, axis, side) * f[idx];
  }

  /// Neighbor value; ghost for obstacle cells, the stored value (zero) otherwise.
  [[nodiscard]] double nb(const double* f, std::size_t idx, int axis, int side) const {
    const std::size_t n = side > 0 ? idx + stride[static_cast<std::size_t>(axis)]
                                   : idx - stride[static_cast<std::size_t>(axis)];
    if (kinds[n] == CellKind::kObstacle) return ghost(f, idx, axis, side);
    return f[n];
  }

  /// Centered first difference of a field satisfying the Dirichlet condition.
  [[nodiscard]] double d1(const double* f, std::size_t idx, int axis) const {
    return (nb(f, idx, axis, 1) - nb(f, idx, axis, -1)) / (2.0 * dx);
  }

  /// Centered second difference along one axis with ghosts.
  [[nodiscard]] double d2(const double* f, std::size_t idx, int axis) const {
    return (nb(f, idx, axis, 1) + nb(f, idx, axis, -1) - 2.0 * f[idx]) / (dx * dx);
  }

  /// Mixed second difference from the four diagonal neighbors; non-fluid
  /// diagonal cells contribute zero.
  [[nodiscard]] double dmixed(const double* f, std::size_t idx, int a, int b) const {
    const std::size_t sa = stride[static_cast<std::size_t>(a)];
    const std::size_t sb = stride[static_cast<std::size_t>(b)];
    auto val = [&](std::size_t n) { return fluid(n) ? f[n] : 0.0; };
    return (val(idx + sa + sb) - val(idx + sa - sb) - val(idx - sa + sb) + val(idx - sa - sb)) /
           (4.0 * dx * dx);
  }

  /// Difference of a derived field with no boundary condition: centered
  /// where both neighbors are fluid, one-sided otherwise, zero if isolated.
  [[nodiscard]] double d1_free(const double* f, std::size_t idx, int axis) const {
    const std::size_t s = stride[static_cast<std::size_t>(axis)];
    const bool up = fluid(idx + s);
    const bool down = fluid(idx - s);
    if (up && down) return (f[idx + s] - f[idx - s]) / (2.0 * dx);
    if (up) return (f[idx + s] - f[idx]) / dx;
    if (down) return (f[idx] - f[idx - s]) / dx;
    return 0.0;
  }
};

/// ||grad f||^2 with face differences; equals <f, -L f> for the masked
/// Laplacian L, boundary faces using the clamped crossing fraction.
inline double gradient_norm_sq(const ExteriorGrid& g, const double* f) {
  const Stencil st(g);
  CompensatedSum acc;
  const double inv_dx2 = 1.0 / (g.spacing() * g.spacing());
  for (std::size_t idx : g.fluid_cells()) {
    const double v = f[idx];
    if (v == 0.0) {
      // Faces to fluid neighbors still count once from the plus side.
      for (int a = 0; a < st.dim; ++a) {
        const std::size_t n = idx + st.stride[static_cast<std::size_t>(a)];
        if (st.fluid(n) && f[n] != 0.0) acc += f[n] * f[n] * inv_dx2;
      }
      continue;
    }
    for (int a = 0; a < st.dim; ++a) {
      for (int side : {-1, 1}) {
        const std::size_t n = side > 0 ? idx + st.stride[static_cast<std::size_t>(a)]
                                       : idx - st.stride[static_cast<std::size_t>(a)];
        const CellKind k = st.kinds[n];
        if (k == CellKind::kObstacle) {
          acc += v * v * (1.0 - st.ghost_factor(idx, a, side)) * inv_dx2;
        } else if (k == CellKind::kOutside) {
          acc += v * v * inv_dx2;
        } else if (side > 0) {
          const double diff = f[n] - v;
          acc += diff * diff * inv_dx2;
        }
      }
    }
  }
  return acc.value() * g.cell_volume();
}

inline double l2_norm_sq(const ExteriorGrid& g, const double* f) {
  CompensatedSum acc;
  for (std::size_t idx : g.fluid_cells()) acc += f[idx] * f[idx];
  return acc.value() * g.cell_volume();
}

inline double inner(const ExteriorGrid& g, const double* f, const double* h) {
  CompensatedSum acc;
  for (std::size_t idx : g.fluid_cells()) acc += f[idx] * h[idx];
  return acc.value() * g.cell_volume();
}

}  // namespace dissipwave::detail
