#include "trddpc/lp.hpp"

#include "trddpc/error.hpp"

#include <cmath>
#include <limits>

namespace trddpc {

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::kOptimal: return "optimal";
    case LpStatus::kInfeasible: return "infeasible";
    case LpStatus::kUnbounded: return "unbounded";
    case LpStatus::kIterationLimit: return "iteration-limit";
  }
  return "unknown";
}

namespace {

// Tableau layout: rows 0..m-1 constraints, row m objective (reduced costs);
// columns 0..n-1 structural, n..n+m-1 artificial, last column right-hand side.
class Tableau {
 public:
  Tableau(const Matrix& A, const Vector& b, const LpOptions& opt)
      : m_(static_cast<int>(A.rows())), n_(static_cast<int>(A.cols())), opt_(opt) {
    t_ = Matrix::Zero(m_ + 1, n_ + m_ + 1);
    sign_ = Vector::Ones(m_);
    for (int i = 0; i < m_; ++i) {
      if (b(i) < 0) sign_(i) = -1.0;
      t_.row(i).head(n_) = sign_(i) * A.row(i);
      t_(i, n_ + i) = 1.0;
      t_(i, rhs()) = sign_(i) * b(i);
    }
    basis_.resize(m_);
    for (int i = 0; i < m_; ++i) basis_[i] = n_ + i;
    active_row_.assign(m_, true);
    max_iter_ = opt.max_iterations > 0 ? opt.max_iterations : 50 * (m_ + n_ + 10);
  }

  int rhs() const { return n_ + m_; }

  void set_phase1_objective() {
    t_.row(m_).setZero();
    for (int j = n_; j < n_ + m_; ++j) t_(m_, j) = 1.0;
    for (int i = 0; i < m_; ++i) {
      if (active_row_[i]) t_.row(m_) -= t_.row(i);
    }
  }

  void set_phase2_objective(const Vector& c) {
    t_.row(m_).setZero();
    t_.row(m_).head(n_) = c.transpose();
    for (int i = 0; i < m_; ++i) {
      if (!active_row_[i]) continue;
      const int j = basis_[i];
      const double cj = t_(m_, j);
      if (cj != 0.0) t_.row(m_) -= cj * t_.row(i);
    }
  }

  // Returns kOptimal, kUnbounded or kIterationLimit.
  LpStatus iterate(bool allow_artificial_entering) {
    int degenerate_run = 0;
    const int col_limit = allow_artificial_entering ? n_ + m_ : n_;
    for (int iter = 0; iter < max_iter_; ++iter) {
      const bool bland = degenerate_run > 50;
      int enter = -1;
      double best = -opt_.optimality_tol;
      for (int j = 0; j < col_limit; ++j) {
        if (is_basic(j)) continue;
        const double d = t_(m_, j);
        if (bland) {
          if (d < -opt_.optimality_tol) {
            enter = j;
            break;
          }
        } else if (d < best) {
          best = d;
          enter = j;
        }
      }
      if (enter < 0) return LpStatus::kOptimal;

      int leave = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      double best_pivot = 0.0;
      for (int i = 0; i < m_; ++i) {
        if (!active_row_[i]) continue;
        const double a = t_(i, enter);
        if (a <= opt_.pivot_tol) continue;
        const double ratio = t_(i, rhs()) / a;
        const double slack = 1e-12 * (1.0 + std::abs(best_ratio));
        if (ratio < best_ratio - slack) {
          best_ratio = ratio;
          leave = i;
          best_pivot = a;
        } else if (ratio <= best_ratio + slack) {
          // Tie: Bland picks the smallest basic index, otherwise prefer the
          // larger pivot for stability.
          if (bland ? basis_[i] < basis_[leave] : a > best_pivot) {
            leave = i;
            best_pivot = a;
            best_ratio = std::min(best_ratio, ratio);
          }
        }
      }
      if (leave < 0) return LpStatus::kUnbounded;
      degenerate_run = (best_ratio <= 1e-14) ? degenerate_run + 1 : 0;
      pivot(leave, enter);
    }
    return LpStatus::kIterationLimit;
  }

  void pivot(int r, int c) {
    const double p = t_(r, c);
    t_.row(r) /= p;
    for (int i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = t_(i, c);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    t_(r, c) = 1.0;
    basis_[r] = c;
  }

  // Pivots artificial variables out of the basis after phase 1; rows whose
  // artificial cannot leave are linearly dependent and get deactivated.
  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (!active_row_[i] || basis_[i] < n_) continue;
      int col = -1;
      double best = opt_.pivot_tol;
      for (int j = 0; j < n_; ++j) {
        if (is_basic(j)) continue;
        if (std::abs(t_(i, j)) > best) {
          best = std::abs(t_(i, j));
          col = j;
        }
      }
      if (col >= 0) {
        pivot(i, col);
      } else {
        active_row_[i] = false;
      }
    }
  }

  bool is_basic(int j) const {
    for (int i = 0; i < m_; ++i) {
      if (active_row_[i] && basis_[i] == j) return true;
    }
    return false;
  }

  Vector primal() const {
    Vector x = Vector::Zero(n_);
    for (int i = 0; i < m_; ++i) {
      if (active_row_[i] && basis_[i] < n_) x(basis_[i]) = std::max(0.0, t_(i, rhs()));
    }
    return x;
  }

  double artificial_sum() const {
    double s = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (active_row_[i] && basis_[i] >= n_) s += std::abs(t_(i, rhs()));
    }
    return s;
  }

  // Multipliers from the reduced costs of the artificial columns (cost 0).
  Vector duals() const {
    Vector pi = Vector::Zero(m_);
    for (int i = 0; i < m_; ++i) {
      if (!active_row_[i]) continue;
      pi(i) = -t_(m_, n_ + i) * sign_(i);
    }
    return pi;
  }

  std::vector<int> basis() const {
    std::vector<int> out;
    for (int i = 0; i < m_; ++i) {
      if (active_row_[i] && basis_[i] < n_) out.push_back(basis_[i]);
    }
    return out;
  }

 private:
  int m_;
  int n_;
  LpOptions opt_;
  Matrix t_;
  Vector sign_;
  std::vector<int> basis_;
  std::vector<bool> active_row_;
  int max_iter_;
};

}  // namespace

LpResult solve_standard_lp(const Matrix& A, const Vector& b, const Vector& c,
                           const LpOptions& options) {
  if (A.rows() != b.size() || A.cols() != c.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "solve_standard_lp");
  }
  LpResult result;
  const int n = static_cast<int>(A.cols());
  if (A.rows() == 0) {
    // Only x >= 0: optimal at 0 unless some cost is negative.
    result.x = Vector::Zero(n);
    result.duals = Vector::Zero(0);
    result.status = (c.size() > 0 && c.minCoeff() < -options.optimality_tol)
                        ? LpStatus::kUnbounded
                        : LpStatus::kOptimal;
    return result;
  }

  Tableau tab(A, b, options);
  tab.set_phase1_objective();
  LpStatus st = tab.iterate(/*allow_artificial_entering=*/true);
  if (st == LpStatus::kIterationLimit) {
    result.status = st;
    result.x = tab.primal();
    return result;
  }
  const double bscale = 1.0 + b.cwiseAbs().maxCoeff();
  result.phase1_residual = tab.artificial_sum();
  if (result.phase1_residual > options.feasibility_tol * bscale) {
    result.status = LpStatus::kInfeasible;
    result.x = tab.primal();
    return result;
  }
  tab.drive_out_artificials();
  tab.set_phase2_objective(c);
  st = tab.iterate(/*allow_artificial_entering=*/false);
  result.status = st;
  result.x = tab.primal();
  result.objective = c.dot(result.x);
  result.duals = tab.duals();
  result.basis = tab.basis();
  return result;
}

LpMaxResult lp_maximize(const Matrix& G, const Vector& h, const Vector& c,
                        const LpOptions& options) {
  if (G.cols() != c.size() || G.rows() != h.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "lp_maximize");
  }
  LpMaxResult out;
  const LpResult dual = solve_standard_lp(G.transpose(), c, h, options);
  if (dual.status == LpStatus::kOptimal) {
    out.status = LpStatus::kOptimal;
    out.value = h.dot(dual.x);
    out.x = dual.duals;
    return out;
  }
  if (dual.status == LpStatus::kUnbounded) {
    out.status = LpStatus::kInfeasible;
    return out;
  }
  if (dual.status == LpStatus::kInfeasible) {
    out.status = lp_feasible(G, h, options) ? LpStatus::kUnbounded : LpStatus::kInfeasible;
    return out;
  }
  out.status = LpStatus::kIterationLimit;
  return out;
}

bool lp_feasible(const Matrix& G, const Vector& h, const LpOptions& options) {
  if (G.rows() == 0) return true;
  // Farkas: {Gx <= h} empty  <=>  exists y >= 0, G'y = 0, h'y < 0.
  const Eigen::Index m = G.rows();
  Matrix A(G.cols() + 1, m);
  A.topRows(G.cols()) = G.transpose();
  A.row(G.cols()).setOnes();
  Vector b = Vector::Zero(G.cols() + 1);
  b(G.cols()) = 1.0;
  const LpResult r = solve_standard_lp(A, b, h, options);
  if (r.status != LpStatus::kOptimal) return true;
  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  return r.objective >= -1e-10 * scale;
}

}  // namespace trddpc
