#pragma once

#include "trddpc/data.hpp"
#include "trddpc/polytope.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace trddpc {

/// Default cap on the number of enumerated model-space vertices.
inline constexpr long kModelVertexCap = 100000;

/// Set of data-consistent models (A, B) at inflation level gamma, over the
/// row-major vectorization theta = vec_rows([A B]) of dimension n(n+m).
/// Every inequality row has the form G theta <= h_offset + (1+gamma) h_noise.
struct ConsistencySet {
  double gamma = 0.0;
  int n = 0;
  int m = 0;
  int i_lo = 0;
  int i_hi = -1;
  Matrix G;
  Vector h;
  Vector h_offset;
  Vector h_noise;

  bool has_vertices = false;
  Matrix vertices;  // columns are theta vertices
  /// When the constraints decouple across rows of [A B]: vertices of each
  /// row polytope in R^{n+m} (columns). Empty otherwise.
  std::vector<Matrix> row_vertices;
  std::string vertex_note;

  int dim() const { return n * (n + m); }
  bool row_separable() const { return !row_vertices.empty(); }
  /// Splits theta into (A, B).
  std::pair<Matrix, Matrix> split(const Vector& theta) const;
  /// Membership of (A, B) in the H-representation; returns min slack.
  double margin(const Matrix& A, const Matrix& B) const;
  nlohmann::json to_json() const;
};

/// Polytopic one-step set built from sample i (0 <= i <= T-2).
ConsistencySet one_step_set(const Trajectory& traj, int i, double gamma, const Polytope& W);

/// Stacks the rows of sets sharing gamma and dimensions; enumerates vertices
/// when requested (dimension <= 8 or row-separable). Throws
/// kEmptyIntersection with the smallest feasible gamma in the message.
ConsistencySet intersect_window(const std::vector<ConsistencySet>& sets, bool enumerate = true);

/// Full consistency set over all samples i = 0..T-2.
ConsistencySet full_consistency_set(const Trajectory& traj, const Polytope& W, double gamma,
                                    bool enumerate = true);

/// Smallest gamma for which the window i_lo..i_hi yields a nonempty set.
double min_consistent_gamma(const Trajectory& traj, const Polytope& W, int i_lo, int i_hi);

/// Least-squares estimate [A B] from all one-step transitions.
Matrix least_squares_model(const Trajectory& traj);

/// max over (A, B) in the set of gauge_norm(A, W), via one LP per
/// (facet of W, vertex of W). Returns +inf when the set is unbounded in the
/// relevant direction.
double max_gauge_over_set(const ConsistencySet& set, const Polytope& W);

struct GammaCertificate {
  double gamma = 0.0;
  double f_gamma = 0.0;  // max gauge over I_full(gamma)
  double start = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

/// Monotone fixed-point iteration gamma <- max gauge over I_full(gamma).
/// Throws kNoConvergence (message carries the last bracket).
GammaCertificate certify_gamma_star(const Trajectory& traj, const Polytope& W, int max_iter = 200,
                                    double tol = 1e-9);

struct ClosedLoopFamily {
  Matrix K;
  MatrixPolytope A_K;
  MatrixPolytope B_set;
};

/// Vertex images A + B K and B of the consistency set. Throws kVerticesMissing.
ClosedLoopFamily closed_loop_family(const ConsistencySet& set, const Matrix& K);

}  // namespace trddpc
