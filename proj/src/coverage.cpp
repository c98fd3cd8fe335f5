#include "trddpc/coverage.hpp"

#include "trddpc/error.hpp"
#include "trddpc/lp.hpp"

#include <Eigen/QR>

#include <cmath>
#include <sstream>

namespace trddpc {

TailDeviationReport check_tail_deviation(const HankelSystem& hs, const Matrix& K, const Polytope& V, double tol) {
  if (K.rows() != hs.m || K.cols() != hs.n) throw Error(ErrorCode::kDimensionMismatch, "tail deviation gain");
  TailDeviationReport r;
  r.deviations = hs.u_block(hs.L) - K * hs.x_block(hs.L);
  r.min_slack = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < r.deviations.cols(); ++i) {
    const double s = V.is_empty() ? -std::numeric_limits<double>::infinity() : V.point_margin(r.deviations.col(i));
    r.slack.push_back(s);
    r.min_slack = std::min(r.min_slack, s);
    if (s < -tol) r.failing.push_back(static_cast<int>(i));
  }
  r.ok = r.failing.empty();
  return r;
}

std::pair<Matrix, Vector> tail_system(const HankelSystem& hs, const Trajectory& traj) {
  if (traj.length() != hs.T) throw Error(ErrorCode::kDimensionMismatch, "trajectory does not match Hankel");
  const int L = hs.L;
  if (hs.T < 2 * L) throw Error(ErrorCode::kInvalidArgument, "tail coverage needs T >= 2L");
  Matrix A(L * (hs.m + hs.n), hs.columns());
  A << hs.u_blocks(0, L - 1), hs.x_blocks(0, L - 1);
  Vector b(A.rows());
  for (int ell = 0; ell < L; ++ell) {
    b.segment(ell * hs.m, hs.m) = traj.u.col(hs.T - L + ell);
    b.segment(L * hs.m + ell * hs.n, hs.n) = traj.x_hat.col(hs.T - L + ell);
  }
  return {A, b};
}

Vector caratheodory_reduce(const Matrix& A, const Vector& h_in, double tol) {
  Vector h = h_in;
  for (int guard = 0; guard < h.size(); ++guard) {
    std::vector<Eigen::Index> supp;
    for (Eigen::Index i = 0; i < h.size(); ++i) {
      if (h(i) > tol) supp.push_back(i);
      else h(i) = 0.0;
    }
    Matrix M(A.rows() + 1, static_cast<Eigen::Index>(supp.size()));
    for (std::size_t k = 0; k < supp.size(); ++k) {
      M.col(static_cast<Eigen::Index>(k)) << A.col(supp[k]), 1.0;
    }
    const Matrix N = null_space(M, 1e-10);
    if (N.cols() == 0) break;
    // Move along a null direction until the first weight hits zero.
    Vector d = N.col(0);
    if (d.maxCoeff() <= 0) d = -d;
    double step = std::numeric_limits<double>::infinity();
    Eigen::Index hit = -1;
    for (std::size_t k = 0; k < supp.size(); ++k) {
      const double dk = d(static_cast<Eigen::Index>(k));
      if (dk > 1e-14) {
        const double s = h(supp[k]) / dk;
        if (s < step) {
          step = s;
          hit = static_cast<Eigen::Index>(k);
        }
      }
    }
    if (hit < 0) break;
    for (std::size_t k = 0; k < supp.size(); ++k) h(supp[k]) -= step * d(static_cast<Eigen::Index>(k));
    h(supp[static_cast<std::size_t>(hit)]) = 0.0;
    for (Eigen::Index i = 0; i < h.size(); ++i) h(i) = std::max(h(i), 0.0);
  }
  return h;
}

CoverageCertificate check_tail_coverage(const HankelSystem& hs, const Trajectory& traj) {
  const auto [A, b] = tail_system(hs, traj);
  const Eigen::Index N = A.cols();
  Matrix Aeq(A.rows() + 1, N);
  Aeq << A, RowVector::Ones(N);
  Vector beq(A.rows() + 1);
  beq << b, 1.0;
  const LpResult r = solve_standard_lp(Aeq, beq, Vector::Zero(N));
  CoverageCertificate c;
  c.residual = r.phase1_residual;
  c.h.theta = 1.0;
  if (r.status != LpStatus::kOptimal) {
    c.feasible = false;
    c.h.g = r.x.size() == N ? r.x : Vector::Zero(N);
    c.max_abs_error = (Aeq * c.h.g - beq).cwiseAbs().maxCoeff();
    return c;
  }
  Vector h = caratheodory_reduce(A, r.x.cwiseMax(0.0));
  // Polish the weights on the final support by least squares.
  std::vector<Eigen::Index> supp;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (h(i) > 0) supp.push_back(i);
  }
  Matrix Ms(Aeq.rows(), static_cast<Eigen::Index>(supp.size()));
  for (std::size_t k = 0; k < supp.size(); ++k) Ms.col(static_cast<Eigen::Index>(k)) = Aeq.col(supp[k]);
  const Vector ws = Ms.colPivHouseholderQr().solve(beq);
  if (ws.minCoeff() >= 0.0 && (Ms * ws - beq).cwiseAbs().maxCoeff() < (Aeq * h - beq).cwiseAbs().maxCoeff()) {
    for (std::size_t k = 0; k < supp.size(); ++k) h(supp[k]) = ws(static_cast<Eigen::Index>(k));
  }
  c.h.g = h;
  c.support = static_cast<int>(supp.size());
  c.max_abs_error = (Aeq * h - beq).cwiseAbs().maxCoeff();
  c.feasible = c.max_abs_error <= 1e-8;
  return c;
}

CollectResult collect_data(const PlantOracle& plant, const Matrix& K, const Polytope& V, const CollectOptions& opts,
                           std::mt19937_64& rng) {
  const int m = static_cast<int>(K.rows());
  const int n = static_cast<int>(K.cols());
  if (V.dim() != m || V.is_empty()) throw Error(ErrorCode::kInvalidArgument, "excitation set V must be nonempty in R^m");
  if (opts.L < 1 || opts.T_pre2 < opts.L || opts.T_loc < opts.L) {
    throw Error(ErrorCode::kInvalidArgument, "phase lengths must be at least L");
  }
  CollectResult res;
  const int order = opts.L + n + 1;
  if (V.radius() == 0.0) {
    // Pure feedback in every non-prefix sample: the input Hankel is rank
    // deficient by construction.
    res.pe.reason = "V = {0}: local phase is pure feedback, input cannot be persistently exciting";
    throw Error(ErrorCode::kPersistencyOfExcitation, res.pe.reason);
  }
  std::uniform_real_distribution<double> pre(-opts.prefix_amplitude, opts.prefix_amplitude);
  std::uniform_int_distribution<int> pick(0, V.num_vertices() - 1);
  int T_loc = opts.T_loc;
  std::string last_failure;
  ErrorCode last_code = ErrorCode::kRetryCapExceeded;
  for (int attempt = 1; attempt <= opts.retry_cap; ++attempt) {
    res.attempts = attempt;
    res.t_loc_history.push_back(T_loc);
    const int T = opts.L + T_loc + opts.T_pre2 + opts.L;
    Trajectory tr;
    tr.u.resize(m, T);
    tr.x_hat.resize(n, T);
    plant.reset();
    for (int i = 0; i < T; ++i) {
      const Vector xh = plant.measure();
      Vector u(m);
      if (i < opts.L) {
        if (opts.prefix_policy) {
          u = opts.prefix_policy(xh, rng);
        } else {
          for (int k = 0; k < m; ++k) u(k) = pre(rng);
        }
      } else if (i < opts.L + T_loc) {
        u = K * xh + V.vertices().col(pick(rng));
      } else {
        u = K * xh;
      }
      tr.x_hat.col(i) = xh;
      tr.u.col(i) = u;
      plant.apply(u);
    }
    const HankelSystem hs = build_hankel(tr, opts.L + 1);
    res.coverage = check_tail_coverage(hs, tr);
    res.residual_history.push_back(res.coverage.residual);
    res.pe = check_pe(tr.u, order);
    if (res.coverage.feasible && res.pe.ok) {
      res.traj = tr;
      res.deviation = check_tail_deviation(hs, K, V);
      return res;
    }
    if (!res.pe.ok) {
      last_failure = "persistency of excitation of order " + std::to_string(order) + ": " + res.pe.reason;
      last_code = ErrorCode::kPersistencyOfExcitation;
    } else {
      std::ostringstream s;
      s << "tail coverage LP infeasible (phase-1 residual " << res.coverage.residual << ")";
      last_failure = s.str();
      last_code = ErrorCode::kRetryCapExceeded;
    }
    T_loc = static_cast<int>(std::ceil(T_loc * opts.growth));
  }
  std::ostringstream msg;
  msg << "data collection failed after " << opts.retry_cap << " attempts; last failure: " << last_failure;
  throw Error(last_code == ErrorCode::kPersistencyOfExcitation ? last_code : ErrorCode::kRetryCapExceeded, msg.str());
}

}  // namespace trddpc
