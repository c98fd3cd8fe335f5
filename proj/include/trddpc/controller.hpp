#pragma once

#include "trddpc/design.hpp"
#include "trddpc/qp.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace trddpc {

/// {G x <= h} split into genuine inequalities and implicit equalities
/// (opposite row pairs of zero width), which an interior-point method cannot
/// treat as inequalities.
struct SplitRows {
  Matrix G_in;
  Vector h_in;
  Matrix G_eq;
  Vector h_eq;
};

SplitRows split_rows(const Polytope& P);

/// Row ranges of one constraint group inside the stacked inequality G y <= h.
struct ConstraintGroup {
  std::string name;  // "anchor", "state", "input", "terminal", "simplex"
  int begin = 0;
  int end = 0;
};

/// Decision stack y = (z_0..z_L, v_0..v_{L-1}, g).
struct QpLayout {
  int n = 0;
  int m = 0;
  int L = 0;
  int N = 0;  // number of Hankel columns T - L
  int z_offset() const { return 0; }
  int v_offset() const { return n * (L + 1); }
  int g_offset() const { return n * (L + 1) + m * L; }
  int num_vars() const { return g_offset() + N; }
  std::vector<ConstraintGroup> groups;
};

struct AssembledQp {
  QpProblem qp;
  QpLayout layout;
  /// Rows of the anchoring group depend on x_hat: h_anchor = h_E + G_E x_hat
  /// (inequalities) and likewise for implicit equalities of a flat E.
  Matrix G_E;
  Vector h_E;
  Matrix G_E_eq;
  Vector h_E_eq;
  int anchor_row = 0;
  int anchor_eq_row = 0;
};

/// Builds the strictly convex (in Z, V) OCP at measurement x_hat. Throws
/// kDimensionMismatch, kEmptySet, or kInvalidArgument (R not positive definite).
AssembledQp assemble_qp(const DesignArtifacts& art, const Vector& x_hat);

/// Re-targets an assembled QP to a new measurement.
void update_measurement(AssembledQp& aq, const Vector& x_hat);

struct GroupMargins {
  double anchor = 0.0;
  double state = 0.0;
  double input = 0.0;
  double terminal = 0.0;
  double simplex = 0.0;
  double min() const;
  nlohmann::json to_json() const;
};

struct OcpSolution {
  bool feasible = false;
  QpStatus status = QpStatus::kNumerical;
  Matrix Z;  // n x (L+1)
  Matrix V;  // m x L
  SimplexCoefficient g;
  double objective = 0.0;
  double hankel_residual = 0.0;
  GroupMargins margins;
  int iterations = 0;
  double solve_seconds = 0.0;
};

struct ControllerOptions {
  QpOptions qp;
  bool warm_start = true;
  /// Secondary solve: least-norm g on the optimal face.
  bool tie_break_g = false;
};

/// Stage + terminal cost of a plan.
double plan_cost(const DesignArtifacts& art, const Matrix& Z, const Matrix& V);

/// Constraint margins of a plan (Z, V, g) at measurement x_hat.
GroupMargins plan_margins(const DesignArtifacts& art, const Matrix& Z, const Matrix& V, const SimplexCoefficient& g,
                          const Vector& x_hat);

/// Solves the OCP at x_hat (optionally warm-started from a coefficient).
/// Returns feasible = false with status kInfeasible when x_hat is outside
/// the feasible region; throws kSolverFailure when the solver stalls on a
/// feasible problem.
OcpSolution solve_ocp(const DesignArtifacts& art, const Vector& x_hat, const ControllerOptions& opts = {},
                      const SimplexCoefficient* warm = nullptr);

/// u = v*_0 + K x_hat.
Vector control_input(const DesignArtifacts& art, const OcpSolution& sol, const Vector& x_hat);

/// g+ = J g* + g*_{N-1} h with J the forward shift (g+_0 = 0, g+_i = g*_{i-1}).
SimplexCoefficient shift_coefficient(const SimplexCoefficient& g_star, const CoverageCertificate& h);

struct ShiftReport {
  Matrix Z;  // candidate z_{0..L}
  Matrix V;  // candidate v_{0..L-1}
  SimplexCoefficient g;
  double cost = 0.0;
  bool stage = false;          // z_l in Z (l = 1..L), v_l + K z_l in U_hat
  bool initial = false;        // z_0 - x_hat_{k+1} in E
  bool terminal = false;       // z_L in Z_f
  bool realizable = false;     // Hankel equality and scaled simplex
  GroupMargins margins;
  double hankel_residual = 0.0;
  bool all() const { return stage && initial && terminal && realizable; }
};

/// Shifted candidate built from the time-k optimum and the next measurement.
ShiftReport shift_candidate(const DesignArtifacts& art, const OcpSolution& sol_k, const Vector& x_hat_next,
                            double tol = 1e-9);

/// Receding-horizon controller owning an assembled QP; one per closed loop.
class Controller {
 public:
  Controller(const DesignArtifacts& art, ControllerOptions opts = {});
  OcpSolution solve(const Vector& x_hat, const SimplexCoefficient* warm = nullptr);
  const DesignArtifacts& artifacts() const { return art_; }

 private:
  const DesignArtifacts& art_;
  ControllerOptions opts_;
  AssembledQp aq_;
};

}  // namespace trddpc
