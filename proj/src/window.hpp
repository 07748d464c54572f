#pragma once

#include <algorithm>
#include <cstddef>

#include "dissipwave/geometry.hpp"
#include "dissipwave/solver.hpp"

namespace dissipwave::detail {

inline ActiveWindow merge(const ActiveWindow& a, const ActiveWindow& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  ActiveWindow w;
  for (int k = 0; k < 3; ++k) {
    w.lo[k] = std::min(a.lo[k], b.lo[k]);
    w.hi[k] = std::max(a.hi[k], b.hi[k]);
  }
  return w;
}

/// Grows the window by `cells` along every grid axis, clipped to the box.
inline ActiveWindow expand(const ExteriorGrid& g, const ActiveWindow& w, int cells = 1) {
  if (w.empty()) return w;
  ActiveWindow out = w;
  for (int a = 0; a < g.dim(); ++a) {
    out.lo[a] = std::max(1, w.lo[a] - cells);
    out.hi[a] = std::min(g.cells_per_axis(), w.hi[a] + cells);
  }
  return out;
}

template <typename Fn>
void for_window(const ExteriorGrid& g, const ActiveWindow& w, Fn&& fn) {
  if (w.empty()) return;
  const auto& s = g.strides();
  for (int i = w.lo[0]; i <= w.hi[0]; ++i) {
    for (int j = w.lo[1]; j <= w.hi[1]; ++j) {
      const std::size_t base = static_cast<std::size_t>(i) * s[0] + static_cast<std::size_t>(j) * s[1];
      for (int k = w.lo[2]; k <= w.hi[2]; ++k) fn(base + static_cast<std::size_t>(k) * s[2]);
    }
  }
}

/// Row-wise walk along the unit-stride axis: fn(base, lo, hi) covers the
/// cells base + k for lo <= k <= hi.
template <typename Fn>
void for_window_rows(const ExteriorGrid& g, const ActiveWindow& w, Fn&& fn) {
  if (w.empty()) return;
  const auto& s = g.strides();
  const int inner = g.dim() - 1;
  const int lo = w.lo[static_cast<std::size_t>(inner)];
  const int hi = w.hi[static_cast<std::size_t>(inner)];
  if (inner == 1) {
    for (int i = w.lo[0]; i <= w.hi[0]; ++i) fn(static_cast<std::size_t>(i) * s[0], lo, hi);
    return;
  }
  for (int i = w.lo[0]; i <= w.hi[0]; ++i) {
    for (int j = w.lo[1]; j <= w.hi[1]; ++j) {
      fn(static_cast<std::size_t>(i) * s[0] + static_cast<std::size_t>(j) * s[1], lo, hi);
    }
  }
}

}  // namespace dissipwave::detail
