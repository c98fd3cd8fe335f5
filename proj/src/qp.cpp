#include "trddpc/qp.hpp"

#include "trddpc/error.hpp"
#include "trddpc/lp.hpp"

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace trddpc {

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIterations: return "max-iterations";
    case QpStatus::kNumerical: return "numerical";
  }
  return "unknown";
}

QpProblem QpProblem::from_dense(const Matrix& P, const Vector& q, const Matrix& A, const Vector& b, const Matrix& G,
                                const Vector& h) {
  QpProblem qp;
  qp.P = P.sparseView();
  qp.q = q;
  qp.A = A.sparseView();
  qp.b = b;
  qp.G = G.sparseView();
  qp.h = h;
  return qp;
}

namespace {

using Triplet = Eigen::Triplet<double>;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double max_step(const Vector& v, const Vector& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
  }
  return a;
}

// Newton system of the interior-point method in reduced form
//   [M  A'] [dx]   [r1]
//   [A  0 ] [dy] = [r2],   M = P + G' W G,
// factored with static regularization and corrected by iterative refinement.
class NewtonSystem {
 public:
  NewtonSystem(const QpProblem& qp, double reg) : qp_(qp), reg_(reg), n_(qp.q.size()), me_(qp.A.rows()) {
    Gt_ = qp.G.transpose();
  }

  // Re-factors for new weights w = z ./ s. Returns false on breakdown.
  bool factor(const Vector& w) {
    const SparseMatrix WG = w.asDiagonal() * qp_.G;
    M_ = qp_.P + Gt_ * WG;
    std::vector<Triplet> trip;
    trip.reserve(static_cast<std::size_t>(M_.nonZeros() + qp_.A.nonZeros() + n_ + me_));
    double r = reg_;
    for (int attempt = 0; attempt < 6; ++attempt) {
      trip.clear();
      for (Eigen::Index c = 0; c < M_.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(M_, c); it; ++it) {
          if (it.row() >= it.col()) trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        }
      }
      for (Eigen::Index c = 0; c < qp_.A.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(qp_.A, c); it; ++it) {
          trip.emplace_back(static_cast<int>(n_ + it.row()), static_cast<int>(it.col()), it.value());
        }
      }
      for (Eigen::Index i = 0; i < n_; ++i) trip.emplace_back(static_cast<int>(i), static_cast<int>(i), r);
      for (Eigen::Index i = 0; i < me_; ++i) {
        trip.emplace_back(static_cast<int>(n_ + i), static_cast<int>(n_ + i), -r);
      }
      SparseMatrix K(n_ + me_, n_ + me_);
      K.setFromTriplets(trip.begin(), trip.end());
      if (!analyzed_) {
        ldlt_.analyzePattern(K);
        analyzed_ = true;
      }
      ldlt_.factorize(K);
      if (ldlt_.info() == Eigen::Success && quasi_definite()) return true;
      r *= 100.0;
    }
    return false;
  }

  // Solves the unregularized system: regularized solve followed by
  // iterative refinement.
  void solve(const Vector& r1, const Vector& r2, Vector& dx, Vector& dy) const {
    Vector rhs(n_ + me_);
    rhs << r1, r2;
    Vector sol = ldlt_.solve(rhs);
    const double scale = std::max(1.0, inf_norm(rhs));
    for (int k = 0; k < 10; ++k) {
      const Vector e = rhs - apply(sol);
      if (inf_norm(e) <= 1e-14 * scale) break;
      sol += ldlt_.solve(e);
    }
    dx = sol.head(n_);
    dy = sol.tail(me_);
  }

 private:
  // The regularized KKT matrix is quasi-definite: n positive and me negative
  // pivots. A different inertia signals a numerically broken factorization.
  bool quasi_definite() const {
    const Vector d = ldlt_.vectorD();
    if (!d.allFinite()) return false;
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) pos += d(i) > 0 ? 1 : 0;
    return pos == n_;
  }

  Vector apply(const Vector& sol) const {
    Vector out(n_ + me_);
    const auto x = sol.head(n_);
    const auto y = sol.tail(me_);
    out.head(n_) = M_ * x;
    if (me_ > 0) {
      out.head(n_) += qp_.A.transpose() * y;
      out.tail(me_) = qp_.A * x;
    }
    return out;
  }

  const QpProblem& qp_;
  double reg_;
  Eigen::Index n_;
  Eigen::Index me_;
  SparseMatrix Gt_;
  SparseMatrix M_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
};

// Phase-1 LP on [G; A; -A] x <= [h; b; -b]; only for modest sizes since the
// LP solver is dense.
QpStatus classify(const QpProblem& qp) {
  const Eigen::Index n = qp.q.size(), mi = qp.G.rows(), me = qp.A.rows();
  if (n * (mi + 2 * me) > 4'000'000) return QpStatus::kNumerical;
  Matrix G(mi + 2 * me, n);
  Vector h(mi + 2 * me);
  G << Matrix(qp.G), Matrix(qp.A), -Matrix(qp.A);
  h << qp.h, qp.b, -qp.b;
  return lp_feasible(G, h) ? QpStatus::kNumerical : QpStatus::kInfeasible;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const QpOptions& opts, const Vector* x0) {
  const Eigen::Index n = qp.q.size();
  const Eigen::Index me = qp.A.rows();
  const Eigen::Index mi = qp.G.rows();
  if (qp.P.rows() != n || qp.P.cols() != n || qp.A.cols() != n || qp.b.size() != me || qp.G.cols() != n ||
      qp.h.size() != mi) {
    throw Error(ErrorCode::kDimensionMismatch, "QP data dimensions");
  }
  QpResult res;
  const double scale_b = 1.0 + inf_norm(qp.b);
  const double scale_h = 1.0 + inf_norm(qp.h);
  const double scale_q = 1.0 + inf_norm(qp.q);
  const SparseMatrix Gt = qp.G.transpose();
  const SparseMatrix At = qp.A.transpose();

  NewtonSystem ns(qp, opts.reg);
  // Initial point: least-squares fit of G x + s = h with s = 0 on the
  // equality manifold, then slacks and multipliers shifted into the interior.
  Vector x, y, z, s;
  {
    if (!ns.factor(Vector::Ones(mi))) {
      res.status = QpStatus::kNumerical;
      return res;
    }
    Vector dy;
    ns.solve(-qp.q + Gt * qp.h, qp.b, x, dy);
    y = dy;
    if (x0 != nullptr && x0->size() == n) x = *x0;
    s = qp.h - qp.G * x;
    z = Vector::Ones(mi);
    if (mi > 0) {
      const double ds = std::max(-1.5 * s.minCoeff(), 0.0);
      s.array() += ds;
      s = s.cwiseMax(1e-8);
      const double sz = s.dot(z);
      s.array() += 0.5 * sz / z.sum();
      z.array() += 0.5 * sz / s.sum();
    }
  }

  for (int it = 0; it < opts.max_iter; ++it) {
    res.iterations = it;
    const Vector rd = qp.P * x + qp.q + At * y + Gt * z;
    const Vector rp = qp.A * x - qp.b;
    const Vector ri = qp.G * x + s - qp.h;
    const double mu = mi > 0 ? s.dot(z) / static_cast<double>(mi) : 0.0;
    res.primal_residual = std::max(inf_norm(rp) / scale_b, inf_norm(ri) / scale_h);
    res.dual_residual = inf_norm(rd) / scale_q;
    res.mu = mu;
    if (res.primal_residual <= opts.tol && res.dual_residual <= opts.tol && mu <= opts.tol) {
      res.status = QpStatus::kOptimal;
      break;
    }
    if (!x.allFinite() || inf_norm(z) > 1e14) {
      res.status = QpStatus::kNumerical;
      break;
    }
    const Vector w = z.cwiseQuotient(s);
    if (!ns.factor(w)) {
      res.status = QpStatus::kNumerical;
      break;
    }
    // dz = W G dx + S^{-1}(Z ri - rsz), ds = -ri - G dx.
    auto direction = [&](const Vector& rsz, Vector& dx, Vector& dy, Vector& dz, Vector& ds) {
      const Vector t = (z.cwiseProduct(ri) - rsz).cwiseQuotient(s);
      const Vector r1 = -rd - Gt * t;
      ns.solve(r1, -rp, dx, dy);
      const Vector Gdx = qp.G * dx;
      dz = w.cwiseProduct(Gdx) + t;
      ds = -ri - Gdx;
    };
    Vector dx, dy, dz, ds;
    // Predictor (affine scaling).
    direction(s.cwiseProduct(z), dx, dy, dz, ds);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    double sigma = 0.0;
    if (mi > 0) {
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi);
      sigma = std::pow(mu_aff / mu, 3);
    }
    // Corrector with centring.
    const Vector rsz = s.cwiseProduct(z) + ds.cwiseProduct(dz) - Vector::Constant(mi, sigma * mu);
    direction(rsz, dx, dy, dz, ds);
    const double alpha = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    res.iterations = it + 1;
    if (it + 1 == opts.max_iter) res.status = QpStatus::kMaxIterations;
  }
  res.x = x;
  res.y = y;
  res.z = z;
  res.s = s;
  res.objective = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
  if (res.status != QpStatus::kOptimal && opts.classify_failure) {
    const QpStatus c = classify(qp);
    if (c == QpStatus::kInfeasible) res.status = c;
  }
  return res;
}

}  // namespace trddpc
