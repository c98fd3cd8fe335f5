#include "trddpc/synthesis.hpp"

#include "trddpc/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trddpc {

namespace {

// Basis of symmetric zero-trace matrices: off-diagonal pairs, then
// e_i e_i^T - e_{n-1} e_{n-1}^T.
std::vector<Matrix> zero_trace_basis(int n) {
  std::vector<Matrix> basis;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      Matrix E = Matrix::Zero(n, n);
      E(i, j) = E(j, i) = 1.0;
      basis.push_back(E);
    }
  }
  for (int i = 0; i + 1 < n; ++i) {
    Matrix E = Matrix::Zero(n, n);
    E(i, i) = 1.0;
    E(n - 1, n - 1) = -1.0;
    basis.push_back(E);
  }
  return basis;
}

Matrix block2(const Matrix& a, const Matrix& b, const Matrix& d) {
  const Eigen::Index n = a.rows();
  Matrix M(2 * n, 2 * n);
  M << a, b, b.transpose(), d;
  return M;
}

double max_sigma_sq(const std::vector<Matrix>& ms) {
  double s = 0.0;
  for (const auto& m : ms) {
    const double v = Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
    s = std::max(s, v * v);
  }
  return s;
}

Matrix decay_lmi(const Matrix& P, double beta, const Matrix& AK) {
  const Eigen::Index n = P.rows();
  return block2(P - beta * Matrix::Identity(n, n), AK * P, P);
}

}  // namespace

double GainCertificate::min_vertex_eig() const {
  double m = std::numeric_limits<double>::infinity();
  for (double v : vertex_min_eig) m = std::min(m, v);
  return m;
}

GainCertificate solve_gain_sdp(const std::vector<Matrix>& A, const std::vector<Matrix>& B,
                               const GainSdpOptions& opts) {
  if (A.empty() || A.size() != B.size()) throw Error(ErrorCode::kInvalidArgument, "gain SDP needs vertex pairs");
  const int n = static_cast<int>(A[0].rows());
  const int m = static_cast<int>(B[0].cols());
  for (std::size_t j = 0; j < A.size(); ++j) {
    if (A[j].rows() != n || A[j].cols() != n || B[j].rows() != n || B[j].cols() != m) {
      throw Error(ErrorCode::kDimensionMismatch, "gain SDP vertex dimensions");
    }
  }
  const std::vector<Matrix> basis = zero_trace_basis(n);
  const int np = static_cast<int>(basis.size());
  const int ny = m * n;
  const int nv = np + ny + 1;
  const int ib = nv - 1;
  const Matrix I = Matrix::Identity(n, n);
  const Matrix Zn = Matrix::Zero(n, n);

  std::vector<LmiBlock> blocks;
  for (std::size_t j = 0; j < A.size(); ++j) {
    LmiBlock b;
    b.F0 = block2(I, A[j], I);
    b.F.resize(static_cast<std::size_t>(nv));
    for (int k = 0; k < np; ++k) b.F[static_cast<std::size_t>(k)] = block2(basis[k], A[j] * basis[k], basis[k]);
    for (int a = 0; a < m; ++a) {
      for (int c = 0; c < n; ++c) {
        Matrix BY = Matrix::Zero(n, n);
        BY.col(c) = B[j].col(a);
        b.F[static_cast<std::size_t>(np + a * n + c)] = block2(Zn, BY, Zn);
      }
    }
    b.F[static_cast<std::size_t>(ib)] = block2(-I, Zn, Zn);
    blocks.push_back(std::move(b));
  }
  for (int k = 0; k < ny; ++k) {
    for (double sgn : {1.0, -1.0}) {
      LmiBlock b;
      b.F0 = Matrix::Constant(1, 1, opts.y_bound);
      b.F.resize(static_cast<std::size_t>(nv));
      b.F[static_cast<std::size_t>(np + k)] = Matrix::Constant(1, 1, sgn);
      blocks.push_back(std::move(b));
    }
  }
  Vector c = Vector::Zero(nv);
  c(ib) = 1.0;
  Vector x0 = Vector::Zero(nv);
  x0(ib) = -max_sigma_sq(A);
  const SdpResult res = solve_lmi_max(c, blocks, x0, opts.sdp);

  GainCertificate cert;
  cert.P = I;
  for (int k = 0; k < np; ++k) cert.P += res.x(k) * basis[k];
  cert.Y.resize(m, n);
  for (int a = 0; a < m; ++a)
    for (int cc = 0; cc < n; ++cc) cert.Y(a, cc) = res.x(np + a * n + cc);
  cert.beta = res.x(ib);
  cert.K = cert.Y * cert.P.inverse();
  for (std::size_t j = 0; j < A.size(); ++j) cert.vertex_min_eig.push_back(res.block_min_eig[j]);
  if (!(cert.beta > 0.0)) {
    std::ostringstream msg;
    msg << "decay SDP infeasible: best beta=" << cert.beta
        << " (data too poor or noise too large to certify stabilizability)";
    throw Error(ErrorCode::kSdpInfeasible, msg.str());
  }
  return cert;
}

GainCertificate solve_gain_sdp(const ConsistencySet& set, const GainSdpOptions& opts) {
  if (!set.has_vertices) throw Error(ErrorCode::kVerticesMissing, "gain SDP needs consistency-set vertices");
  std::vector<Matrix> A;
  std::vector<Matrix> B;
  for (Eigen::Index j = 0; j < set.vertices.cols(); ++j) {
    auto [a, b] = set.split(set.vertices.col(j));
    A.push_back(a);
    B.push_back(b);
  }
  return solve_gain_sdp(A, B, opts);
}

GainCertificate certify_fixed_gain(const std::vector<Matrix>& A_K, const Matrix& K, const GainSdpOptions& opts) {
  if (A_K.empty()) throw Error(ErrorCode::kInvalidArgument, "empty closed-loop family");
  const int n = static_cast<int>(A_K[0].rows());
  const std::vector<Matrix> basis = zero_trace_basis(n);
  const int np = static_cast<int>(basis.size());
  const int nv = np + 1;
  const Matrix I = Matrix::Identity(n, n);
  const Matrix Zn = Matrix::Zero(n, n);
  std::vector<LmiBlock> blocks;
  for (const Matrix& AK : A_K) {
    LmiBlock b;
    b.F0 = block2(I, AK, I);
    b.F.resize(static_cast<std::size_t>(nv));
    for (int k = 0; k < np; ++k) b.F[static_cast<std::size_t>(k)] = block2(basis[k], AK * basis[k], basis[k]);
    b.F[static_cast<std::size_t>(np)] = block2(-I, Zn, Zn);
    blocks.push_back(std::move(b));
  }
  Vector c = Vector::Zero(nv);
  c(np) = 1.0;
  Vector x0 = Vector::Zero(nv);
  x0(np) = -max_sigma_sq(A_K);
  const SdpResult res = solve_lmi_max(c, blocks, x0, opts.sdp);
  GainCertificate cert;
  cert.fixed_gain = true;
  cert.K = K;
  cert.P = I;
  for (int k = 0; k < np; ++k) cert.P += res.x(k) * basis[k];
  cert.Y = K * cert.P;
  cert.beta = res.x(np);
  cert.vertex_min_eig = res.block_min_eig;
  if (!(cert.beta > 0.0)) {
    std::ostringstream msg;
    msg << "fixed-gain decay SDP infeasible: best beta=" << cert.beta;
    throw Error(ErrorCode::kSdpInfeasible, msg.str());
  }
  return cert;
}

std::vector<double> gain_lmi_residuals(const GainCertificate& cert, const std::vector<Matrix>& A_K) {
  std::vector<double> out;
  for (const Matrix& AK : A_K) out.push_back(min_eig(decay_lmi(cert.P, cert.beta, AK)));
  return out;
}

TerminalWeight terminal_weight(const GainCertificate& cert, const Matrix& Q, const Matrix& R, double mu,
                               int max_retries) {
  if (min_eig(Q) <= 0 || min_eig(R) <= 0) throw Error(ErrorCode::kInvalidArgument, "Q and R must be positive definite");
  if (!(cert.beta > 0)) throw Error(ErrorCode::kSdpInfeasible, "gain certificate has beta <= 0");
  const Matrix S = Q + cert.K.transpose() * R * cert.K;
  TerminalWeight tw;
  tw.lambda = cert.beta / max_eig(cert.P);
  const Matrix Ph = sym_sqrt(cert.P);
  const double s_max = max_eig(Ph * S * Ph);
  const Matrix Pinv = cert.P.inverse();
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    tw.mu = mu;
    tw.c_p = (1.0 + mu) * s_max / tw.lambda;
    tw.P_L = tw.c_p * Pinv;
    tw.P_L = 0.5 * (tw.P_L + tw.P_L.transpose());
    const Matrix Pi = sym_inv_sqrt(tw.P_L);
    tw.eta = tw.lambda - max_eig(Pi * S * Pi);
    if (tw.eta > 0.0) return tw;
    mu *= 2.0;
  }
  throw Error(ErrorCode::kMarginNonpositive, "terminal weight margin eta is not positive");
}

double rpi_margin(const std::vector<Matrix>& family, const Polytope& F, const Polytope& dist) {
  if (F.is_empty()) return -std::numeric_limits<double>::infinity();
  double margin = std::numeric_limits<double>::infinity();
  const Matrix& V = F.vertices();
  for (Eigen::Index i = 0; i < F.G().rows(); ++i) {
    const RowVector a = F.G().row(i);
    double sup = -std::numeric_limits<double>::infinity();
    for (const Matrix& M : family) sup = std::max(sup, ((a * M) * V).maxCoeff());
    sup += dist.support_vertices(a.transpose());
    margin = std::min(margin, F.h()(i) - sup);
  }
  return margin;
}

RpiResult rpi_synthesis(const std::vector<Matrix>& family, const Polytope& dist, double eps_outer, int max_iter) {
  if (family.empty()) throw Error(ErrorCode::kInvalidArgument, "empty matrix family");
  if (dist.is_empty()) throw Error(ErrorCode::kEmptySet, "disturbance set is empty");
  if (!dist.contains_point(Vector::Zero(dist.dim()))) {
    throw Error(ErrorCode::kInvalidArgument, "disturbance set must contain the origin");
  }
  Polytope F = Polytope::zero(dist.dim());
  double last = 0.0;
  for (int k = 0; k <= max_iter; ++k) {
    const Polytope cand = F.scaled(1.0 + eps_outer);
    last = rpi_margin(family, cand, dist);
    if (last >= 0.0) return {cand, k, last};
    F = minkowski_sum(hull_of_images(family, F), dist);
  }
  std::ostringstream msg;
  msg << "RPI iteration did not terminate within " << max_iter << " steps (last margin " << last << ")";
  throw Error(ErrorCode::kNoTermination, msg.str());
}

Polytope disturbance_set(const Polytope& W, double gamma_star, double theta) {
  return minkowski_sum(minkowski_sum(W.scaled(theta * (1.0 + gamma_star)), W.scaled(gamma_star)), W);
}

TubeDesign tighten(const Polytope& X, const Polytope& U, const Polytope& W, double gamma_star, const Polytope& E,
                   const std::vector<Matrix>& A_K, const Matrix& K, double theta) {
  TubeDesign t;
  t.theta = theta;
  t.gamma_star = gamma_star;
  t.E = E;
  t.E_w = W.scaled(gamma_star);
  t.E_off = W.scaled(theta * (1.0 + gamma_star));
  t.E_on = hull_of_images(A_K, E);
  t.D = disturbance_set(W, gamma_star, theta);
  const Polytope z1 = pontryagin_diff(X, t.E_off);
  const Polytope z2 = z1.is_empty() ? z1 : pontryagin_diff(z1, t.E_on);
  t.Z = z2.is_empty() ? z2 : pontryagin_diff(z2, t.E_w);
  const Polytope KE = linear_image(K, E);
  t.U_hat = pontryagin_diff(U, KE);
  if (t.Z.is_empty() || t.U_hat.is_empty()) {
    std::string which;
    if (z1.is_empty()) which = "X - E_off";
    else if (z2.is_empty()) which = "X - E_off - E_on";
    else if (t.Z.is_empty()) which = "X - E_off - E_on - E_w";
    if (t.U_hat.is_empty()) which += std::string(which.empty() ? "" : " and ") + "U - K E";
    const Polytope state_sum = minkowski_sum(minkowski_sum(t.E_off, t.E_on), t.E_w);
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 40; ++it) {
      const double s = 0.5 * (lo + hi);
      const bool ok = !pontryagin_diff(X, state_sum.scaled(s)).is_empty() &&
                      !pontryagin_diff(U, KE.scaled(s)).is_empty();
      (ok ? lo : hi) = s;
    }
    std::ostringstream msg;
    msg << "tightened set empty (nonemptiness of Z and U_hat violated) at " << which
        << "; largest noise scale keeping both nonempty ~ " << lo << " x current";
    throw Error(ErrorCode::kTightenedSetEmpty, msg.str());
  }
  return t;
}

TubeDesign design_tube(const Polytope& X, const Polytope& U, const Polytope& W, double gamma_star,
                       const std::vector<Matrix>& A_K, const Matrix& K, double theta, double eps_outer) {
  const Polytope D = disturbance_set(W, gamma_star, theta);
  const RpiResult E = rpi_synthesis(A_K, D, eps_outer);
  TubeDesign t = tighten(X, U, W, gamma_star, E.set, A_K, K, theta);
  t.rpi_margin = E.margin;
  t.rpi_iterations = E.iterations;
  return t;
}

Polytope terminal_disturbance(const Polytope& W, double gamma_star, const std::vector<Matrix>& B_set,
                              const Polytope& V, double theta) {
  return minkowski_sum(W.scaled(theta * (1.0 + gamma_star)), hull_of_images(B_set, V));
}

TerminalDesign terminal_set(const Polytope& Z, const Polytope& U_hat, const std::vector<Matrix>& A_K,
                            const std::vector<Matrix>& B_set, const Polytope& W, double gamma_star,
                            const Matrix& K, const Polytope& V_shape, double eps_outer, double theta,
                            bool allow_shrink) {
  auto attempt = [&](double c, TerminalDesign& out) {
    out = TerminalDesign{};
    out.v_scale = c;
    out.V_poly = V_shape.scaled(c);
    out.Omega = terminal_disturbance(W, gamma_star, B_set, out.V_poly, theta);
    try {
      const RpiResult r = rpi_synthesis(A_K, out.Omega, eps_outer);
      out.Z_f = r.set;
      out.margin_rpi = r.margin;
      out.rpi_iterations = r.iterations;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoTermination) throw;
      out.margin_rpi = -1.0;
      out.margin_state = out.margin_input = -1.0;
      return false;
    }
    out.margin_state = contains(Z, out.Z_f).margin;
    out.margin_input = contains(U_hat, minkowski_sum(linear_image(K, out.Z_f), out.V_poly)).margin;
    return out.certified();
  };
  TerminalDesign best;
  if (attempt(1.0, best)) return best;
  auto fail = [&](const TerminalDesign& d) {
    std::ostringstream msg;
    msg << "terminal set conditions violated (rpi margin " << d.margin_rpi << ", Z_f in Z margin "
        << d.margin_state << ", K Z_f + V in U_hat margin " << d.margin_input << ")";
    return Error(ErrorCode::kTerminalDesignInfeasible, msg.str());
  };
  if (!allow_shrink) throw fail(best);
  TerminalDesign zero;
  if (!attempt(0.0, zero)) throw fail(zero);
  double lo = 0.0, hi = 1.0;
  TerminalDesign cur;
  for (int it = 0; it < 20; ++it) {
    const double c = 0.5 * (lo + hi);
    if (attempt(c, cur)) {
      lo = c;
      best = cur;
    } else {
      hi = c;
    }
  }
  if (lo == 0.0) return zero;
  return best;
}

double max_quadratic_over(const Polytope& P, const Matrix& M) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < P.vertices().cols(); ++j) {
    const Vector v = P.vertices().col(j);
    best = std::max(best, v.dot(M * v));
  }
  return best;
}

IssCertificate iss_constants(const TubeDesign& tube, const TerminalDesign& term, const TerminalWeight& tw,
                             const std::vector<Matrix>& B_set, const Polytope& X, const Polytope& W,
                             const Matrix& Q, const Matrix& R, int L) {
  if (tw.lambda >= 1.0) {
    throw Error(ErrorCode::kLambdaGeOne, "decay rate lambda >= 1 leaves alpha = eta / (1 - lambda) undefined");
  }
  IssCertificate c;
  c.eps = W.radius();
  const double rE = tube.E.radius();
  c.beta_h = c.eps > 0 ? rE / c.eps : 0.0;
  c.alpha = tw.eta / (1.0 - tw.lambda);
  c.lambda_max_PL = max_eig(tw.P_L);
  const double inflate = tube.theta * (1.0 + tube.gamma_star);
  c.c_delta = (1.0 + 1.0 / c.alpha) * 2.0 * c.lambda_max_PL * inflate * inflate;
  double dv = 0.0;
  for (const Matrix& B : B_set) {
    for (Eigen::Index j = 0; j < term.V_poly.vertices().cols(); ++j) {
      dv = std::max(dv, (B * term.V_poly.vertices().col(j)).norm());
    }
  }
  c.d_bar_V = dv;
  c.c_V = (1.0 + 1.0 / c.alpha) * 2.0 * c.lambda_max_PL * dv * dv;
  c.q_lower = min_eig(Q);
  c.kappa = 0.5 * c.q_lower;
  c.alpha_V_lower = c.q_lower;
  // Upper bound on any feasible cost: maximize each convex stage term over
  // the vertices of its admissible set.
  const Polytope z0_set = minkowski_sum(minkowski_sum(X, W), tube.E);
  c.V_max = max_quadratic_over(z0_set, Q) + (L - 1) * max_quadratic_over(tube.Z, Q) +
            L * max_quadratic_over(tube.U_hat, R) + max_quadratic_over(term.Z_f, tw.P_L);
  c.alpha_V_upper = c.V_max / std::max(rE * rE, 1e-24);
  const double coef = std::max({c.q_lower, c.alpha_V_lower, 2.0 * c.alpha_V_upper});
  c.c_hat = (c.c_delta + coef * c.beta_h * c.beta_h) * c.eps * c.eps + c.c_V;
  c.c_hat_tight = (c.c_delta + c.q_lower * c.beta_h * c.beta_h) * c.eps * c.eps + c.c_V;
  return c;
}

}  // namespace trddpc
