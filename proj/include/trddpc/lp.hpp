#pragma once

#include "trddpc/linalg.hpp"

#include <vector>

namespace trddpc {

enum class LpStatus { kOptimal, kInfeasible, kUnbounded, kIterationLimit };

const char* to_string(LpStatus status);

struct LpOptions {
  double pivot_tol = 1e-9;
  double optimality_tol = 1e-10;
  /// Phase-1 objective above this value declares infeasibility.
  double feasibility_tol = 1e-9;
  int max_iterations = 0;  // 0: automatic, 50 * (rows + cols)
};

/// Result of a standard-form solve. `duals` are the simplex multipliers of the
/// equality rows; `phase1_residual` is the optimal sum of artificial
/// variables (zero when feasible).
struct LpResult {
  LpStatus status = LpStatus::kIterationLimit;
  Vector x;
  double objective = 0.0;
  Vector duals;
  std::vector<int> basis;
  double phase1_residual = 0.0;
};

/// Two-phase dense tableau simplex for  min c'x  s.t.  A x = b, x >= 0.
/// On infeasibility, `x` holds the phase-1 minimizer of the L1 equality
/// residual.
LpResult solve_standard_lp(const Matrix& A, const Vector& b, const Vector& c,
                           const LpOptions& options = {});

struct LpMaxResult {
  LpStatus status = LpStatus::kIterationLimit;
  double value = 0.0;
  Vector x;
};

/// max c'x subject to G x <= h with x free, solved through the dual
///   min h'y  s.t.  G'y = c, y >= 0.
LpMaxResult lp_maximize(const Matrix& G, const Vector& h, const Vector& c,
                        const LpOptions& options = {});

/// True iff {x | G x <= h} is nonempty (Farkas certificate LP).
bool lp_feasible(const Matrix& G, const Vector& h, const LpOptions& options = {});

}  // namespace trddpc
