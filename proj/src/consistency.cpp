#include "trddpc/consistency.hpp"

#include "trddpc/error.hpp"
#include "trddpc/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace trddpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Rows of G_w (I_n ⊗ phi^T) over theta = vec_rows([A B]).
Matrix regressor_rows(const Matrix& Gw, const Vector& phi, int n) {
  const int p = static_cast<int>(phi.size());
  Matrix out = Matrix::Zero(Gw.rows(), n * p);
  for (Eigen::Index i = 0; i < Gw.rows(); ++i) {
    for (int r = 0; r < n; ++r) out.row(i).segment(r * p, p) = Gw(i, r) * phi.transpose();
  }
  return out;
}

// Lexicographic ordering of columns for deterministic vertex lists.
Matrix sort_columns(const Matrix& M) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(M.cols()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      if (M(r, a) != M(r, b)) return M(r, a) < M(r, b);
    }
    return false;
  });
  Matrix out(M.rows(), M.cols());
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = M.col(idx[j]);
  return out;
}

// Cartesian product of per-row vertex sets, stacked row-major.
Matrix row_product(const std::vector<Matrix>& rows) {
  long total = 1;
  for (const auto& r : rows) total *= static_cast<long>(r.cols());
  Eigen::Index dim = 0;
  for (const auto& r : rows) dim += r.rows();
  Matrix out(dim, total);
  for (long k = 0; k < total; ++k) {
    long rem = k;
    Eigen::Index off = 0;
    std::vector<long> pick(rows.size());
    for (std::size_t r = rows.size(); r-- > 0;) {
      pick[r] = rem % rows[r].cols();
      rem /= rows[r].cols();
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.col(k).segment(off, rows[r].rows()) = rows[r].col(pick[r]);
      off += rows[r].rows();
    }
  }
  return out;
}

void enumerate_set_vertices(ConsistencySet& s) {
  const int p = s.n + s.m;
  const int dim = s.dim();
  // Row separability: every constraint touches coordinates of a single row.
  std::vector<int> row_of(static_cast<std::size_t>(s.G.rows()), -1);
  bool separable = true;
  for (Eigen::Index i = 0; i < s.G.rows() && separable; ++i) {
    int owner = -1;
    for (int c = 0; c < dim; ++c) {
      if (s.G(i, c) == 0.0) continue;
      const int r = c / p;
      if (owner < 0) owner = r;
      else if (owner != r) {
        separable = false;
        break;
      }
    }
    row_of[static_cast<std::size_t>(i)] = owner;
  }
  if (separable && s.n > 1) {
    std::vector<Matrix> rows;
    long total = 1;
    for (int r = 0; r < s.n; ++r) {
      std::vector<Eigen::Index> sel;
      for (Eigen::Index i = 0; i < s.G.rows(); ++i) {
        if (row_of[static_cast<std::size_t>(i)] == r) sel.push_back(i);
      }
      Matrix Gr(static_cast<Eigen::Index>(sel.size()), p);
      Vector hr(static_cast<Eigen::Index>(sel.size()));
      for (std::size_t k = 0; k < sel.size(); ++k) {
        Gr.row(static_cast<Eigen::Index>(k)) = s.G.row(sel[k]).segment(r * p, p);
        hr(static_cast<Eigen::Index>(k)) = s.h(sel[k]);
      }
      if (sel.empty()) throw Error(ErrorCode::kUnbounded, "row of [A B] unconstrained");
      const Polytope poly = Polytope::from_halfspaces(Gr, hr);
      if (poly.is_empty()) {
        throw Error(ErrorCode::kEmptyIntersection, "row block empty");
      }
      rows.push_back(sort_columns(poly.vertices()));
      total *= poly.num_vertices();
    }
    s.row_vertices = rows;
    if (total > kModelVertexCap) {
      s.has_vertices = false;
      s.vertex_note = "vertex product exceeds cap";
      return;
    }
    s.vertices = row_product(rows);
    s.has_vertices = true;
    return;
  }
  if (dim > 8) {
    s.has_vertices = false;
    s.vertex_note = "dimension above enumeration limit";
    return;
  }
  const Matrix V = enumerate_vertices(s.G, s.h);
  if (V.cols() == 0) throw Error(ErrorCode::kEmptyIntersection, "consistency set empty");
  if (V.cols() > kModelVertexCap) {
    s.has_vertices = false;
    s.vertex_note = "vertex count exceeds cap";
    return;
  }
  s.vertices = sort_columns(V);
  if (s.n == 1) s.row_vertices = {s.vertices};
  s.has_vertices = true;
}

double min_gamma_rows(const Matrix& G, const Vector& h_offset, const Vector& h_noise) {
  // min gamma  s.t.  G theta - h_noise * gamma <= h_offset + h_noise.
  Matrix A(G.rows(), G.cols() + 1);
  A.leftCols(G.cols()) = G;
  A.col(G.cols()) = -h_noise;
  Vector c = Vector::Zero(G.cols() + 1);
  c(G.cols()) = -1.0;
  const LpMaxResult r = lp_maximize(A, h_offset + h_noise, c);
  if (r.status == LpStatus::kOptimal) return -r.value;
  if (r.status == LpStatus::kUnbounded) return -kInf;
  throw Error(ErrorCode::kSolverFailure, "minimum-gamma LP failed");
}

}  // namespace

std::pair<Matrix, Matrix> ConsistencySet::split(const Vector& theta) const {
  const Matrix AB = unvec_rows(theta, n, n + m);
  return {AB.leftCols(n), AB.rightCols(m)};
}

double ConsistencySet::margin(const Matrix& A, const Matrix& B) const {
  Matrix AB(n, n + m);
  AB << A, B;
  return (h - G * vec_rows(AB)).minCoeff();
}

nlohmann::json ConsistencySet::to_json() const {
  nlohmann::json j;
  j["gamma"] = gamma;
  j["window"] = {i_lo, i_hi};
  std::vector<std::vector<double>> Gr;
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    Gr.emplace_back(static_cast<std::size_t>(G.cols()));
    for (Eigen::Index c = 0; c < G.cols(); ++c) Gr.back()[static_cast<std::size_t>(c)] = G(i, c);
  }
  j["G"] = Gr;
  j["h"] = std::vector<double>(h.data(), h.data() + h.size());
  std::vector<std::vector<double>> V;
  if (has_vertices) {
    for (Eigen::Index c = 0; c < vertices.cols(); ++c) {
      V.emplace_back(vertices.col(c).data(), vertices.col(c).data() + vertices.rows());
    }
  }
  j["vertices"] = V;
  nlohmann::json layout = nlohmann::json::array();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n + m; ++c) {
      layout.push_back({{"index", r * (n + m) + c}, {"row", r}, {"col", c < n ? c : c - n},
                        {"block", c < n ? "A" : "B"}});
    }
  }
  j["layout"] = layout;
  return j;
}

ConsistencySet one_step_set(const Trajectory& traj, int i, double gamma, const Polytope& W) {
  traj.validate();
  if (i < 0 || i > traj.length() - 2) throw Error(ErrorCode::kIndexOutOfRange, "one_step_set index");
  if (W.dim() != traj.n()) throw Error(ErrorCode::kDimensionMismatch, "noise set dimension");
  const int n = traj.n();
  const int m = traj.m();
  Vector phi(n + m);
  phi << traj.x_hat.col(i), traj.u.col(i);
  ConsistencySet s;
  s.gamma = gamma;
  s.n = n;
  s.m = m;
  s.i_lo = i;
  s.i_hi = i;
  s.G = -regressor_rows(W.G(), phi, n);
  s.h_noise = W.h();
  s.h_offset = -W.G() * traj.x_hat.col(i + 1);
  s.h = s.h_offset + (1.0 + gamma) * s.h_noise;
  return s;
}

ConsistencySet intersect_window(const std::vector<ConsistencySet>& sets, bool enumerate) {
  if (sets.empty()) throw Error(ErrorCode::kInvalidArgument, "no consistency sets");
  ConsistencySet out;
  out.gamma = sets[0].gamma;
  out.n = sets[0].n;
  out.m = sets[0].m;
  out.i_lo = sets[0].i_lo;
  out.i_hi = sets[0].i_hi;
  Eigen::Index rows = 0;
  for (const auto& s : sets) {
    if (s.n != out.n || s.m != out.m) throw Error(ErrorCode::kDimensionMismatch, "intersect_window");
    if (std::abs(s.gamma - out.gamma) > 1e-15) throw Error(ErrorCode::kInvalidArgument, "mixed gamma");
    rows += s.G.rows();
    out.i_lo = std::min(out.i_lo, s.i_lo);
    out.i_hi = std::max(out.i_hi, s.i_hi);
  }
  out.G.resize(rows, out.dim());
  out.h.resize(rows);
  out.h_offset.resize(rows);
  out.h_noise.resize(rows);
  Eigen::Index off = 0;
  for (const auto& s : sets) {
    out.G.middleRows(off, s.G.rows()) = s.G;
    out.h.segment(off, s.G.rows()) = s.h;
    out.h_offset.segment(off, s.G.rows()) = s.h_offset;
    out.h_noise.segment(off, s.G.rows()) = s.h_noise;
    off += s.G.rows();
  }
  if (!lp_feasible(out.G, out.h)) {
    const double gmin = min_gamma_rows(out.G, out.h_offset, out.h_noise);
    std::ostringstream msg;
    msg << "consistency window [" << out.i_lo << ", " << out.i_hi << "] is empty at gamma=" << out.gamma
        << "; smallest feasible gamma=" << gmin;
    throw Error(ErrorCode::kEmptyIntersection, msg.str());
  }
  if (enumerate) {
    try {
      enumerate_set_vertices(out);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnbounded) throw;
      out.has_vertices = false;
      out.row_vertices.clear();
      out.vertex_note = "set is unbounded (data not rich enough)";
    }
  }
  return out;
}

ConsistencySet full_consistency_set(const Trajectory& traj, const Polytope& W, double gamma, bool enumerate) {
  std::vector<ConsistencySet> sets;
  sets.reserve(static_cast<std::size_t>(traj.length() - 1));
  for (int i = 0; i + 1 < traj.length(); ++i) sets.push_back(one_step_set(traj, i, gamma, W));
  if (!enumerate || W.radius() > 0.0) return intersect_window(sets, enumerate);
  // Noise-free data: the set is the affine solution set of the exact
  // transitions, a single model under persistent excitation. Vertex
  // enumeration of such a degenerate set is ill-conditioned, so the point is
  // taken from least squares and checked against the transitions.
  ConsistencySet out = intersect_window(sets, false);
  const Matrix AB = least_squares_model(traj);
  const int T = traj.length();
  Matrix Phi(traj.n() + traj.m(), T - 1);
  Phi << traj.x_hat.leftCols(T - 1), traj.u.leftCols(T - 1);
  const Matrix resid = AB * Phi - traj.x_hat.rightCols(T - 1);
  const double scale = 1.0 + traj.x_hat.cwiseAbs().maxCoeff();
  if (resid.cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw Error(ErrorCode::kEmptyIntersection, "consistency set empty: noise-free data are not generated by an LTI model");
  }
  Eigen::JacobiSVD<Matrix> svd(Phi);
  if (svd.singularValues().minCoeff() <= 1e-9 * svd.singularValues().maxCoeff()) {
    throw Error(ErrorCode::kUnbounded, "noise-free data do not determine [A B]");
  }
  const int p = traj.n() + traj.m();
  Vector theta(traj.n() * p);
  for (int r = 0; r < traj.n(); ++r) theta.segment(r * p, p) = AB.row(r).transpose();
  out.vertices = theta;
  out.has_vertices = true;
  out.row_vertices.clear();
  for (int r = 0; r < traj.n(); ++r) out.row_vertices.push_back(AB.row(r).transpose());
  return out;
}

double min_consistent_gamma(const Trajectory& traj, const Polytope& W, int i_lo, int i_hi) {
  std::vector<ConsistencySet> sets;
  for (int i = i_lo; i <= i_hi; ++i) sets.push_back(one_step_set(traj, i, 0.0, W));
  Eigen::Index rows = 0;
  for (const auto& s : sets) rows += s.G.rows();
  Matrix G(rows, sets[0].dim());
  Vector ho(rows), hn(rows);
  Eigen::Index off = 0;
  for (const auto& s : sets) {
    G.middleRows(off, s.G.rows()) = s.G;
    ho.segment(off, s.G.rows()) = s.h_offset;
    hn.segment(off, s.G.rows()) = s.h_noise;
    off += s.G.rows();
  }
  return min_gamma_rows(G, ho, hn);
}

Matrix least_squares_model(const Trajectory& traj) {
  traj.validate();
  const int T = traj.length();
  Matrix Phi(traj.n() + traj.m(), T - 1);
  Phi << traj.x_hat.leftCols(T - 1), traj.u.leftCols(T - 1);
  const Matrix Xp = traj.x_hat.rightCols(T - 1);
  return Phi.transpose().completeOrthogonalDecomposition().solve(Xp.transpose()).transpose();
}

double max_gauge_over_set(const ConsistencySet& set, const Polytope& W) {
  const int n = set.n;
  const int p = n + set.m;
  if (W.h().size() == 0 || W.h().minCoeff() <= 0) {
    throw Error(ErrorCode::kOriginNotInterior, "gauge requires 0 in int(W)");
  }
  double best = -kInf;
  for (Eigen::Index i = 0; i < W.G().rows(); ++i) {
    for (Eigen::Index v = 0; v < W.vertices().cols(); ++v) {
      Vector c = Vector::Zero(set.dim());
      for (int r = 0; r < n; ++r) {
        for (int col = 0; col < n; ++col) c(r * p + col) = W.G()(i, r) * W.vertices()(col, v) / W.h()(i);
      }
      const LpMaxResult res = lp_maximize(set.G, set.h, c);
      if (res.status == LpStatus::kUnbounded) return kInf;
      if (res.status != LpStatus::kOptimal) throw Error(ErrorCode::kSolverFailure, "gauge LP failed");
      best = std::max(best, res.value);
    }
  }
  return std::max(best, 0.0);
}

GammaCertificate certify_gamma_star(const Trajectory& traj, const Polytope& W, int max_iter, double tol) {
  GammaCertificate cert;
  if (W.is_empty()) throw Error(ErrorCode::kEmptySet, "noise set is empty");
  if (W.radius() == 0.0) {
    // Noise-free data: all noise-scaled sets collapse regardless of gamma.
    cert.gamma = 0.0;
    cert.f_gamma = 0.0;
    return cert;
  }
  const Matrix AB = least_squares_model(traj);
  const Matrix A_ls = AB.leftCols(traj.n());
  double gamma = gauge_norm(A_ls, W);
  const double gmin = min_consistent_gamma(traj, W, 0, traj.length() - 2);
  if (gamma <= gmin) gamma = gmin + std::max(1e-6, 1e-3 * std::abs(gmin));
  cert.start = gamma;
  cert.history.push_back(gamma);
  for (int it = 0; it < max_iter; ++it) {
    const ConsistencySet I = full_consistency_set(traj, W, gamma, false);
    const double f = max_gauge_over_set(I, W);
    cert.iterations = it + 1;
    if (!std::isfinite(f) || f > 1e8) {
      std::ostringstream msg;
      msg << "gauge bound diverged at gamma=" << gamma;
      throw Error(ErrorCode::kNoConvergence, msg.str());
    }
    const double scale = std::max(1.0, std::abs(gamma));
    if (f <= gamma + tol * scale) {
      if (gamma - f <= 10.0 * tol * scale || it + 1 == max_iter) {
        cert.gamma = gamma;
        cert.f_gamma = f;
        return cert;
      }
      // Decreasing branch: every iterate is self-consistent, so step down.
      const double next = std::max(f, gmin + std::max(1e-6, 1e-3 * std::abs(gmin)));
      if (next >= gamma) {
        cert.gamma = gamma;
        cert.f_gamma = f;
        return cert;
      }
      gamma = next;
    } else {
      // Increasing branch: overshoot slightly so the fixed point certifies.
      gamma = f + (f - gamma < tol * scale ? 10.0 * tol * scale : 0.0);
    }
    cert.history.push_back(gamma);
  }
  std::ostringstream msg;
  msg << "no fixed point within " << max_iter << " iterations; last bracket ["
      << cert.history[cert.history.size() - 2] << ", " << cert.history.back() << "]";
  throw Error(ErrorCode::kNoConvergence, msg.str());
}

ClosedLoopFamily closed_loop_family(const ConsistencySet& set, const Matrix& K) {
  if (K.rows() != set.m || K.cols() != set.n) throw Error(ErrorCode::kDimensionMismatch, "closed_loop_family K");
  if (!set.has_vertices && set.row_vertices.empty()) {
    throw Error(ErrorCode::kVerticesMissing, "consistency set has no enumerated vertices");
  }
  const int n = set.n;
  const int m = set.m;
  ClosedLoopFamily fam;
  fam.K = K;
  fam.A_K.rows = n;
  fam.A_K.cols = n;
  fam.B_set.rows = n;
  fam.B_set.cols = m;
  if (set.row_separable()) {
    // Row r of A + B K only depends on row r of [A B]: the family is the
    // product of the per-row images.
    std::vector<Matrix> ak_rows;
    std::vector<Matrix> b_rows;
    for (int r = 0; r < n; ++r) {
      const Matrix& V = set.row_vertices[static_cast<std::size_t>(r)];
      const Matrix img = V.topRows(n) + K.transpose() * V.bottomRows(m);
      ak_rows.push_back(sort_columns(Polytope::from_points(img).vertices()));
      b_rows.push_back(sort_columns(Polytope::from_points(V.bottomRows(m)).vertices()));
    }
    const Matrix ak = row_product(ak_rows);
    const Matrix bs = row_product(b_rows);
    for (Eigen::Index j = 0; j < ak.cols(); ++j) fam.A_K.vertices.push_back(unvec_rows(ak.col(j), n, n));
    for (Eigen::Index j = 0; j < bs.cols(); ++j) fam.B_set.vertices.push_back(unvec_rows(bs.col(j), n, m));
    return fam;
  }
  Matrix ak(n * n, set.vertices.cols());
  Matrix bs(n * m, set.vertices.cols());
  for (Eigen::Index j = 0; j < set.vertices.cols(); ++j) {
    auto [A, B] = set.split(set.vertices.col(j));
    ak.col(j) = vec_rows(A + B * K);
    bs.col(j) = vec_rows(B);
  }
  const Matrix akv = n * n <= 6 ? Polytope::from_points(ak).vertices() : unique_columns(ak, 1e-12);
  const Matrix bsv = n * m <= 6 ? Polytope::from_points(bs).vertices() : unique_columns(bs, 1e-12);
  const Matrix aks = sort_columns(akv);
  const Matrix bss = sort_columns(bsv);
  for (Eigen::Index j = 0; j < aks.cols(); ++j) fam.A_K.vertices.push_back(unvec_rows(aks.col(j), n, n));
  for (Eigen::Index j = 0; j < bss.cols(); ++j) fam.B_set.vertices.push_back(unvec_rows(bss.col(j), n, m));
  return fam;
}

}  // namespace trddpc
