#pragma once

#include "trddpc/linalg.hpp"

#include <json.hpp>

#include <vector>

namespace trddpc {

/// Default absolute tolerance on normalized facet residuals.
inline constexpr double kGeomTol = 1e-9;

/// Result of a containment test P ⊇ Q: `margin` is the minimum slack of Q's
/// vertices against P's facets (negative when Q sticks out).
struct Containment {
  bool contained = false;
  double margin = 0.0;
};

/// Bounded convex polytope {x | G x <= h}. Rows are normalized to unit norm;
/// lower-dimensional sets carry each implicit equality as a pair of opposite
/// rows. Vertices are computed once at construction (columns of a matrix).
/// An empty polytope is a legal value.
class Polytope {
 public:
  Polytope() = default;

  /// H-representation. Throws kUnbounded when the set is unbounded.
  static Polytope from_halfspaces(const Matrix& G, const Vector& h, double tol = kGeomTol);
  /// Convex hull of the columns of `points` (dim x count).
  static Polytope from_points(const Matrix& points, double tol = kGeomTol);
  static Polytope from_points(const std::vector<Vector>& points, int dim, double tol = kGeomTol);
  static Polytope box(const Vector& lo, const Vector& hi);
  static Polytope symmetric_box(const Vector& radius);
  static Polytope point(const Vector& p);
  static Polytope zero(int dim);
  static Polytope empty(int dim);
  /// Assembles a polytope from a consistent H/V pair without recomputation;
  /// the caller guarantees that V spans exactly {G x <= h}.
  static Polytope from_trusted(const Matrix& G, const Vector& h, const Matrix& V, int affine_dim);

  int dim() const { return dim_; }
  bool is_empty() const { return empty_; }
  const Matrix& G() const { return G_; }
  const Vector& h() const { return h_; }
  /// Vertices as columns (dim x count).
  const Matrix& vertices() const { return V_; }
  int num_vertices() const { return static_cast<int>(V_.cols()); }
  /// Dimension of the affine hull (-1 when empty).
  int affine_dim() const { return affine_dim_; }

  /// max <d, x> over P via LP.
  double support(const Vector& d) const;
  /// max <d, x> over P by scanning vertices.
  double support_vertices(const Vector& d) const;
  /// Argmax vertex of <d, x>.
  Vector support_point(const Vector& d) const;

  bool contains_point(const Vector& x, double tol = kGeomTol) const;
  /// min_i (h_i - G_i x); nonnegative iff x in P.
  double point_margin(const Vector& x) const;
  /// Gauge function max_i (G_i x) / h_i; requires h > 0.
  double gauge(const Vector& x) const;

  Polytope scaled(double s) const;
  Polytope translated(const Vector& t) const;

  /// Euclidean radius max ||v|| over vertices.
  double radius() const;
  /// Radius of the largest Euclidean ball inside P (0 for degenerate sets).
  double chebyshev_radius() const;
  Vector centroid() const;

  nlohmann::json to_json() const;
  static Polytope from_json(const nlohmann::json& j);

 private:
  int dim_ = 0;
  bool empty_ = true;
  int affine_dim_ = -1;
  Matrix G_;
  Vector h_;
  Matrix V_;
};

// ---- set operations ----
Polytope minkowski_sum(const Polytope& a, const Polytope& b);
Polytope pontryagin_diff(const Polytope& a, const Polytope& b);
Polytope linear_image(const Matrix& m, const Polytope& p);
Polytope convex_hull_union(const std::vector<Polytope>& ps);
Polytope intersect(const Polytope& a, const Polytope& b);
Polytope cartesian_product(const Polytope& a, const Polytope& b);
/// Hull of the union of images M_j P over a family of matrices.
Polytope hull_of_images(const std::vector<Matrix>& ms, const Polytope& p);

/// Induced gauge norm min{gamma : M W ⊆ gamma W}. Throws kOriginNotInterior.
double gauge_norm(const Matrix& m, const Polytope& w);
Containment contains(const Polytope& outer, const Polytope& inner);

/// Vertex enumeration of {x | G x <= h} (rows need not be normalized).
/// Returns vertices as columns; empty matrix when the set is empty.
Matrix enumerate_vertices(const Matrix& G, const Vector& h, double tol = kGeomTol);

/// Removes duplicate columns within tolerance (one representative per
/// cluster, original column order).
Matrix unique_columns(const Matrix& pts, double tol);

/// Chebyshev center of {G x <= h}: returns (center, radius); radius < 0
/// signals emptiness. Throws kUnbounded if radius is unbounded.
std::pair<Vector, double> chebyshev_center(const Matrix& G, const Vector& h);

/// A set of matrices given by its vertices (the model-space polytopes).
struct MatrixPolytope {
  int rows = 0;
  int cols = 0;
  std::vector<Matrix> vertices;
};

}  // namespace trddpc
