#pragma once

#include "trddpc/linalg.hpp"

#include <Eigen/SparseCore>

#include <string>

namespace trddpc {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// min 0.5 x'Px + q'x  s.t.  A x = b,  G x <= h  (P symmetric, both
/// triangles stored).
struct QpProblem {
  SparseMatrix P;
  Vector q;
  SparseMatrix A;
  Vector b;
  SparseMatrix G;
  Vector h;

  int num_vars() const { return static_cast<int>(q.size()); }
  /// Convenience constructor from dense data.
  static QpProblem from_dense(const Matrix& P, const Vector& q, const Matrix& A, const Vector& b, const Matrix& G,
                              const Vector& h);
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations, kNumerical };

const char* to_string(QpStatus s);

struct QpOptions {
  double tol = 1e-8;       // primal/dual residual and complementarity tolerance
  int max_iter = 100;
  double reg = 1e-8;       // static regularization of the KKT system
  bool classify_failure = true;  // run a phase-1 LP when the IPM stalls (small problems only)
};

struct QpResult {
  QpStatus status = QpStatus::kNumerical;
  Vector x;
  Vector y;  // equality multipliers
  Vector z;  // inequality multipliers
  Vector s;  // inequality slacks
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double mu = 0.0;
};

/// Mehrotra predictor-corrector interior-point method. Each Newton step
/// factors the regularized quasi-definite KKT matrix
/// [P + G'WG + rI, A'; A, -rI] with a sparse LDL' and refines the solution
/// against the unregularized system, so P may be singular on directions
/// bounded by the constraints. An optional start x0 seeds the primal iterate
/// (slacks and multipliers are re-centred).
QpResult solve_qp(const QpProblem& qp, const QpOptions& opts = {}, const Vector* x0 = nullptr);

}  // namespace trddpc
