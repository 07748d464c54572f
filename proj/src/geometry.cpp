#include "dissipwave/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace dissipwave {

double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm(const Point& a) { return std::sqrt(dot(a, a)); }

namespace {

Point scaled(const Point& p, double s) { return {p[0] * s, p[1] * s, p[2] * s}; }

Point sub(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Point unit(const Point& p) {
  const double n = norm(p);
  return n > 0.0 ? scaled(p, 1.0 / n) : Point{0.0, 0.0, 0.0};
}

struct StarEdge {
  double ax, ay, bx, by;
};

// Edge of the star polygon whose angular sector contains (x, y), in the
// polygon's own (unrotated) frame.
StarEdge star_edge(const StarPolygon& s, double x, double y) {
  const double sector = std::numbers::pi / s.points;
  double psi = std::atan2(y, x);
  if (psi < 0.0) psi += 2.0 * std::numbers::pi;
  int k = static_cast<int>(std::floor(psi / sector));
  k = std::clamp(k, 0, 2 * s.points - 1);
  const double a0 = k * sector;
  const double a1 = (k + 1) * sector;
  const double r0 = (k % 2 == 0) ? s.r_outer : s.r_inner;
  const double r1 = (k % 2 == 0) ? s.r_inner : s.r_outer;
  return {r0 * std::cos(a0), r0 * std::sin(a0), r1 * std::cos(a1), r1 * std::sin(a1)};
}

void rotate(double angle, double& x, double& y) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double rx = c * x - s * y;
  const double ry = s * x + c * y;
  x = rx;
  y = ry;
}

}  // namespace

bool Obstacle::contains(const Point& raw) const {
  const Point p = scaled(raw, scale_);
  return std::visit(
      [&](const auto& s) -> bool {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return dot(sub(p, s.center), sub(p, s.center)) < s.radius * s.radius;
        } else if constexpr (std::is_same_v<T, StarPolygon>) {
          double x = p[0];
          double y = p[1];
          if (s.rotation != 0.0) rotate(-s.rotation, x, y);
          if (x == 0.0 && y == 0.0) return true;
          const StarEdge e = star_edge(s, x, y);
          const double cross = (e.bx - e.ax) * (y - e.ay) - (e.by - e.ay) * (x - e.ax);
          return cross > 0.0;
        } else {
          const bool in_disk = dot(p, p) < s.radius * s.radius;
          const Point q = sub(p, s.bite_center);
          return in_disk && dot(q, q) > s.bite_radius * s.bite_radius;
        }
      },
      shape_);
}

Point Obstacle::outward_normal(const Point& raw) const {
  const Point p = scaled(raw, scale_);
  return std::visit(
      [&](const auto& s) -> Point {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return unit(sub(s.center, p));
        } else if constexpr (std::is_same_v<T, StarPolygon>) {
          double x = p[0];
          double y = p[1];
          if (s.rotation != 0.0) rotate(-s.rotation, x, y);
          const StarEdge e = star_edge(s, x, y);
          // Counter-clockwise edge: the polygon exterior lies to the right.
          double nx = -(e.by - e.ay);
          double ny = e.bx - e.ax;
          if (s.rotation != 0.0) rotate(s.rotation, nx, ny);
          return unit(Point{nx, ny, 0.0});
        } else {
          const double to_rim = std::abs(norm(p) - s.radius);
          const double to_bite = std::abs(norm(sub(p, s.bite_center)) - s.bite_radius);
          if (to_rim <= to_bite) return unit(scaled(p, -1.0));
          return unit(sub(p, s.bite_center));
        }
      },
      shape_);
}

double Obstacle::bounding_radius() const {
  const double r = std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          return norm(s.center) + s.radius;
        } else if constexpr (std::is_same_v<T, StarPolygon>) {
          return std::max(s.r_outer, s.r_inner);
        } else {
          return s.radius;
        }
      },
      shape_);
  return r / scale_;
}

double Obstacle::surface_measure(int dim) const {
  const double pi = std::numbers::pi;
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          if (dim == 2) return 2.0 * pi * s.radius / scale_;
          return 4.0 * pi * s.radius * s.radius / (scale_ * scale_);
        } else if constexpr (std::is_same_v<T, StarPolygon>) {
          if (dim != 2) return std::nan("");
          const double a = pi / s.points;
          const double edge = std::sqrt(s.r_outer * s.r_outer + s.r_inner * s.r_inner -
                                        2.0 * s.r_outer * s.r_inner * std::cos(a));
          return 2.0 * s.points * edge / scale_;
        } else {
          if (dim != 2) return std::nan("");
          const double d = norm(s.bite_center);
          const double big = s.radius;
          const double r = s.bite_radius;
          const double alpha = std::acos((big * big + d * d - r * r) / (2.0 * big * d));
          const double beta = std::acos((r * r + d * d - big * big) / (2.0 * r * d));
          return (big * (2.0 * pi - 2.0 * alpha) + 2.0 * beta * r) / scale_;
        }
      },
      shape_);
}

std::string Obstacle::describe() const {
  std::ostringstream os;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Ball>) {
          os << "ball(r=" << s.radius << ", center=(" << s.center[0] << "," << s.center[1] << ","
             << s.center[2] << "))";
        } else if constexpr (std::is_same_v<T, StarPolygon>) {
          os << "star(points=" << s.points << ", r_outer=" << s.r_outer
             << ", r_inner=" << s.r_inner << ")";
        } else {
          os << "crescent(r=" << s.radius << ", bite_r=" << s.bite_radius << ")";
        }
      },
      shape_);
  if (scale_ != 1.0) os << " scaled by 1/" << scale_;
  return os.str();
}

ExteriorGrid::ExteriorGrid(int dim, double spacing, double extent, Obstacle obstacle)
    : dim_(dim), spacing_(spacing), extent_(extent), obstacle_(std::move(obstacle)) {
  cell_volume_ = std::pow(spacing_, dim_);
  const double cells = 2.0 * extent_ / spacing_;
  n_ = static_cast<int>(std::lround(cells));
  if (std::abs(cells - n_) > 1e-9 * cells) {
    throw GeometryError("extent must be an integer multiple of spacing/2");
  }
  for (int a = 0; a < 3; ++a) padded_[a] = a < dim_ ? n_ + 2 : 1;
  strides_[2] = 1;
  strides_[1] = static_cast<std::size_t>(padded_[2]);
  strides_[0] = static_cast<std::size_t>(padded_[1]) * strides_[1];
  const std::size_t total = static_cast<std::size_t>(padded_[0]) * strides_[0];
  kind_.assign(total, CellKind::kOutside);
  ghost_slot_.assign(total, -1);
  diag_extra_.assign(total, 0.0);
  classify();
  build_boundary();
}

std::array<int, 3> ExteriorGrid::unravel(std::size_t idx) const {
  std::array<int, 3> ijk{};
  ijk[0] = static_cast<int>(idx / strides_[0]);
  idx %= strides_[0];
  ijk[1] = static_cast<int>(idx / strides_[1]);
  ijk[2] = static_cast<int>(idx % strides_[1]);
  return ijk;
}

Point ExteriorGrid::center(std::size_t idx) const {
  const auto ijk = unravel(idx);
  Point p{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) p[a] = coordinate(ijk[a]);
  return p;
}

void ExteriorGrid::classify() {
  for (std::size_t idx = 0; idx < kind_.size(); ++idx) {
    const auto ijk = unravel(idx);
    bool halo = false;
    for (int a = 0; a < dim_; ++a) halo = halo || ijk[a] == 0 || ijk[a] == n_ + 1;
    if (halo) continue;
    kind_[idx] = obstacle_.contains(center(idx)) ? CellKind::kObstacle : CellKind::kFluid;
    if (kind_[idx] == CellKind::kFluid) fluid_cells_.push_back(idx);
  }
  fluid_count_ = fluid_cells_.size();
}

void ExteriorGrid::build_boundary() {
  for (std::size_t idx : fluid_cells_) {
    const Point xc = center(idx);
    GhostLinks links;
    links.cell = idx;
    double extra = 0.0;
    for (int a = 0; a < dim_; ++a) {
      for (int side : {-1, 1}) {
        const std::size_t nb = side > 0 ? idx + strides_[a] : idx - strides_[a];
        if (kind_[nb] != CellKind::kObstacle) continue;
        // Bisect along the grid line for the obstacle surface.
        double lo = 0.0;
        double hi = 1.0;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          Point p = xc;
          p[a] += side * mid * spacing_;
          if (obstacle_.contains(p)) {
            hi = mid;
          } else {
            lo = mid;
          }
        }
        const double theta = hi;
        const double clamped = std::max(theta, kMinGhostTheta);
        const int dir = 2 * a + (side > 0 ? 1 : 0);
        links.obstacle_dirs |= static_cast<std::uint8_t>(1u << dir);
        links.ghost_factor[dir] = -(1.0 - clamped) / clamped;
        extra += (1.0 - clamped) / clamped;

        BoundaryFace face;
        face.x = xc;
        face.x[a] += side * theta * spacing_;
        face.sigma = obstacle_.outward_normal(face.x);
        face.weight = std::pow(spacing_, dim_ - 1) * std::abs(face.sigma[a]);
        face.cell = idx;
        face.axis = a;
        face.side = side;
        face.theta = theta;
        faces_.push_back(face);
      }
    }
    if (links.obstacle_dirs != 0) {
      kind_[idx] = CellKind::kBoundaryFluid;
      ghost_slot_[idx] = static_cast<int>(ghosts_.size());
      ghosts_.push_back(links);
      diag_extra_[idx] = extra;
    }
  }
}

double ExteriorGrid::neighbor_value(const std::vector<double>& field, std::size_t idx, int axis,
                                    int side) const {
  const std::size_t nb = side > 0 ? idx + strides_[axis] : idx - strides_[axis];
  if (kind_[nb] == CellKind::kObstacle) {
    const int slot = ghost_slot_[idx];
    if (slot < 0) return 0.0;
    return ghosts_[static_cast<std::size_t>(slot)].ghost_factor[2 * axis + (side > 0 ? 1 : 0)] *
           field[idx];
  }
  return field[nb];
}

ExteriorGrid build_exterior_grid(int dim, double spacing, double extent, const Obstacle& obstacle) {
  if (dim != 2 && dim != 3) throw GeometryError("dimension must be 2 or 3");
  if (!(spacing > 0.0)) throw GeometryError("spacing must be positive");
  if (!obstacle.contains_origin()) throw GeometryError("origin not inside obstacle");
  if (!(extent > obstacle.bounding_radius())) {
    throw GeometryError("extent must exceed the obstacle bounding radius");
  }
  if (dim == 3 && !std::holds_alternative<Ball>(obstacle.shape())) {
    throw GeometryError("only ball obstacles are supported in 3D");
  }
  return ExteriorGrid(dim, spacing, extent, obstacle);
}

StarShapeReport star_shape_audit(const ExteriorGrid& grid, double tolerance) {
  StarShapeReport report;
  report.max_x_dot_sigma = -std::numeric_limits<double>::infinity();
  for (const auto& f : grid.boundary_faces()) {
    const double s = dot(f.x, f.sigma);
    if (s > report.max_x_dot_sigma) {
      report.max_x_dot_sigma = s;
      report.witness_x = f.x;
      report.witness_sigma = f.sigma;
    }
  }
  report.pass = report.max_x_dot_sigma <= tolerance;
  return report;
}

}  // namespace dissipwave
