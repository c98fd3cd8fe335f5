#include "trddpc/sdp.hpp"

#include "trddpc/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace trddpc {

namespace {

bool nonzero(const Matrix& m) { return m.size() > 0; }

// Barrier value -sum log det, or +inf when some block is not positive definite.
double barrier(const std::vector<LmiBlock>& blocks, const Vector& x) {
  double total = 0.0;
  for (const auto& b : blocks) {
    Eigen::LLT<Matrix> llt(lmi_value(b, x));
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    const Matrix& Lm = llt.matrixLLT();
    for (Eigen::Index i = 0; i < Lm.rows(); ++i) {
      if (!(Lm(i, i) > 0.0)) return std::numeric_limits<double>::infinity();
      total -= 2.0 * std::log(Lm(i, i));
    }
  }
  return total;
}

}  // namespace

Matrix lmi_value(const LmiBlock& b, const Vector& x) {
  Matrix M = b.F0;
  for (std::size_t k = 0; k < b.F.size(); ++k) {
    if (nonzero(b.F[k]) && x(static_cast<Eigen::Index>(k)) != 0.0) M += x(static_cast<Eigen::Index>(k)) * b.F[k];
  }
  return 0.5 * (M + M.transpose());
}

SdpResult solve_lmi_max(const Vector& c, const std::vector<LmiBlock>& blocks, const Vector& x0,
                        const SdpOptions& opts) {
  const Eigen::Index nv = c.size();
  if (x0.size() != nv) throw Error(ErrorCode::kDimensionMismatch, "SDP start dimension");
  if (!std::isfinite(barrier(blocks, x0))) {
    throw Error(ErrorCode::kInvalidArgument, "SDP start point is not strictly feasible");
  }
  double total_rows = 0.0;
  for (const auto& b : blocks) total_rows += static_cast<double>(b.F0.rows());

  SdpResult res;
  Vector x = x0;
  double t = opts.t0;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    for (int it = 0; it < opts.max_newton; ++it) {
      Vector grad = -t * c;
      Matrix H = Matrix::Zero(nv, nv);
      for (const auto& b : blocks) {
        const Matrix Fx = lmi_value(b, x);
        Eigen::LLT<Matrix> llt(Fx);
        const Matrix Finv = llt.solve(Matrix::Identity(Fx.rows(), Fx.cols()));
        std::vector<Eigen::Index> idx;
        std::vector<Matrix> Mk;
        for (std::size_t k = 0; k < b.F.size(); ++k) {
          if (!nonzero(b.F[k])) continue;
          idx.push_back(static_cast<Eigen::Index>(k));
          Mk.push_back(Finv * b.F[k]);
        }
        for (std::size_t a = 0; a < idx.size(); ++a) {
          grad(idx[a]) -= Mk[a].trace();
          for (std::size_t q = a; q < idx.size(); ++q) {
            const double v = Mk[a].cwiseProduct(Mk[q].transpose()).sum();
            H(idx[a], idx[q]) += v;
            if (q != a) H(idx[q], idx[a]) += v;
          }
        }
      }
      Eigen::LDLT<Matrix> ldlt(H);
      Vector dx = -ldlt.solve(grad);
      if (!dx.allFinite()) {
        dx = -H.completeOrthogonalDecomposition().solve(grad);
      }
      const double dec2 = -grad.dot(dx);
      ++res.newton_steps;
      if (dec2 / 2.0 < 1e-10) break;
      const double f0 = -t * c.dot(x) + barrier(blocks, x);
      double s = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector xn = x + s * dx;
        const double fb = barrier(blocks, xn);
        if (std::isfinite(fb) && -t * c.dot(xn) + fb <= f0 - 0.25 * s * dec2) {
          x = xn;
          moved = true;
          break;
        }
        s *= 0.5;
      }
      if (!moved) break;
    }
    if (total_rows / t < opts.gap_tol) {
      res.converged = true;
      break;
    }
    t *= opts.t_growth;
  }
  res.x = x;
  res.objective = c.dot(x);
  for (const auto& b : blocks) res.block_min_eig.push_back(min_eig(lmi_value(b, x)));
  return res;
}

}  // namespace trddpc
