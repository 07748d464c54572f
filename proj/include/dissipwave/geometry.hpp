#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dissipwave {

/// Spatial point; components beyond the grid dimension are zero.
using Point = std::array<double, 3>;

double dot(const Point& a, const Point& b);
double norm(const Point& a);

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Obstacle shapes. All are closed regions described by an inside predicate
// plus an analytic normal; the normal returned by Obstacle::outward_normal is
// the outward unit normal of the fluid region, i.e. it points into the
// obstacle.

struct Ball {
  double radius = 1.0;
  Point center{0.0, 0.0, 0.0};
};

/// Star polygon in the x-y plane (extruded along z in 3D) with `points` tips
/// at radius r_outer and notches at r_inner.
struct StarPolygon {
  int points = 4;
  double r_outer = 1.5;
  double r_inner = 0.75;
  double rotation = 0.0;
};

/// Disk of radius `radius` about the origin with a disk bitten out of it.
/// Contains the origin but is not star-shaped with respect to it.
struct Crescent {
  double radius = 2.0;
  Point bite_center{1.5, 0.0, 0.0};
  double bite_radius = 1.2;
};

using ObstacleShape = std::variant<Ball, StarPolygon, Crescent>;

class Obstacle {
 public:
  Obstacle() = default;
  explicit Obstacle(ObstacleShape shape, double scale = 1.0)
      : shape_(shape), scale_(scale) {}

  [[nodiscard]] bool contains(const Point& p) const;
  /// Unit normal at a boundary point, pointing from the fluid into the obstacle.
  [[nodiscard]] Point outward_normal(const Point& p) const;
  [[nodiscard]] double bounding_radius() const;
  [[nodiscard]] bool contains_origin() const { return contains(Point{0.0, 0.0, 0.0}); }
  /// Perimeter (2D) or surface area (3D, balls only) of the exact shape; NaN
  /// when no closed form is implemented.
  [[nodiscard]] double surface_measure(int dim) const;

  /// The obstacle of the rescaled domain {x : lambda x in Omega}.
  [[nodiscard]] Obstacle rescaled(double lambda) const { return Obstacle(shape_, scale_ * lambda); }

  [[nodiscard]] const ObstacleShape& shape() const { return shape_; }
  /// Coordinates are multiplied by `scale` before the shape is consulted.
  [[nodiscard]] double scale() const { return scale_; }
  [[nodiscard]] std::string describe() const;

 private:
  ObstacleShape shape_{Ball{}};
  double scale_ = 1.0;
};

enum class CellKind : std::uint8_t {
  kOutside = 0,   // halo layer around the computational box
  kObstacle = 1,  // cell center inside the obstacle
  kFluid = 2,
  kBoundaryFluid = 3,  // fluid cell with at least one obstacle neighbor
};

struct BoundaryFace {
  Point x;              // boundary crossing point on the grid line
  Point sigma;          // unit normal pointing into the obstacle
  double weight = 0.0;  // surface quadrature weight
  std::size_t cell = 0; // adjacent fluid cell (padded index)
  int axis = 0;
  int side = 0;  // -1 or +1
  double theta = 1.0;  // crossing fraction of the cell spacing, unclamped
};

/// Per boundary-adjacent cell: obstacle neighbors receive the ghost value
/// ghost_factor * v(cell), the linear extrapolation that vanishes on the
/// obstacle surface.
struct GhostLinks {
  std::size_t cell = 0;
  std::uint8_t obstacle_dirs = 0;  // bit (2*axis + (side>0))
  std::array<double, 6> ghost_factor{};
};

/// Uniform cell-centered grid on [-extent, extent]^d with the obstacle masked
/// out. Arrays are stored with a one-cell zero halo; the last axis is
/// contiguous.
class ExteriorGrid {
 public:
  /// Smallest crossing fraction used by the ghost extrapolation. Keeps the
  /// modified Laplacian inside the Gershgorin disc of the unmasked one.
  static constexpr double kMinGhostTheta = 0.5;

  ExteriorGrid(int dim, double spacing, double extent, Obstacle obstacle);

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] double spacing() const { return spacing_; }
  [[nodiscard]] double extent() const { return extent_; }
  [[nodiscard]] const Obstacle& obstacle() const { return obstacle_; }
  [[nodiscard]] double cell_volume() const { return cell_volume_; }

  [[nodiscard]] int cells_per_axis() const { return n_; }
  [[nodiscard]] const std::array<int, 3>& padded_shape() const { return padded_; }
  [[nodiscard]] const std::array<std::size_t, 3>& strides() const { return strides_; }
  [[nodiscard]] std::size_t size() const { return kind_.size(); }
  [[nodiscard]] std::size_t fluid_count() const { return fluid_count_; }

  [[nodiscard]] std::size_t index(int i, int j = 0, int k = 0) const {
    return static_cast<std::size_t>(i) * strides_[0] + static_cast<std::size_t>(j) * strides_[1] +
           static_cast<std::size_t>(k) * strides_[2];
  }
  [[nodiscard]] std::array<int, 3> unravel(std::size_t idx) const;
  [[nodiscard]] Point center(std::size_t idx) const;
  [[nodiscard]] double coordinate(int padded_i) const {
    return -extent_ + (static_cast<double>(padded_i) - 0.5) * spacing_;
  }

  [[nodiscard]] CellKind kind(std::size_t idx) const { return kind_[idx]; }
  [[nodiscard]] bool is_fluid(std::size_t idx) const {
    return kind_[idx] == CellKind::kFluid || kind_[idx] == CellKind::kBoundaryFluid;
  }
  [[nodiscard]] const std::vector<CellKind>& kinds() const { return kind_; }
  /// Padded indices of all fluid cells in storage order.
  [[nodiscard]] const std::vector<std::size_t>& fluid_cells() const { return fluid_cells_; }

  [[nodiscard]] const std::vector<BoundaryFace>& boundary_faces() const { return faces_; }
  [[nodiscard]] const std::vector<GhostLinks>& ghost_links() const { return ghosts_; }
  /// Index into ghost_links() for a boundary-adjacent cell, -1 otherwise.
  [[nodiscard]] int ghost_slot(std::size_t idx) const { return ghost_slot_[idx]; }
  /// Sum over obstacle neighbors of (1 - theta)/theta; the Dirichlet
  /// correction of the Laplacian diagonal.
  [[nodiscard]] const std::vector<double>& diagonal_extra() const { return diag_extra_; }

  /// Neighbor value of `field` at `idx` in direction (axis, side) with the
  /// Dirichlet ghost substituted for obstacle neighbors.
  [[nodiscard]] double neighbor_value(const std::vector<double>& field, std::size_t idx, int axis,
                                      int side) const;

  /// Largest Euclidean radius of a cell center that is still a full
  /// stencil width away from the box edge.
  [[nodiscard]] double safe_radius() const { return extent_ - 2.0 * spacing_; }

 private:
  void classify();
  void build_boundary();

  int dim_;
  double spacing_;
  double extent_;
  Obstacle obstacle_;
  double cell_volume_;
  int n_;
  std::array<int, 3> padded_{1, 1, 1};
  std::array<std::size_t, 3> strides_{0, 0, 0};
  std::vector<CellKind> kind_;
  std::vector<std::size_t> fluid_cells_;
  std::size_t fluid_count_ = 0;
  std::vector<BoundaryFace> faces_;
  std::vector<GhostLinks> ghosts_;
  std::vector<int> ghost_slot_;
  std::vector<double> diag_extra_;
};

/// Validating constructor; throws GeometryError on invalid input.
ExteriorGrid build_exterior_grid(int dim, double spacing, double extent, const Obstacle& obstacle);

struct StarShapeReport {
  double max_x_dot_sigma = 0.0;
  bool pass = false;
  /// Face attaining the maximum (the witness when the audit fails).
  Point witness_x{};
  Point witness_sigma{};
};

StarShapeReport star_shape_audit(const ExteriorGrid& grid, double tolerance = 1e-10);

}  // namespace dissipwave
