#include "trddpc/polytope.hpp"

#include "trddpc/error.hpp"
#include "trddpc/lp.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace trddpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct HRep {
  Matrix G;
  Vector h;
  bool infeasible = false;
};

// Scales each row to unit norm, drops zero rows (flagging 0 <= negative) and
// merges parallel duplicates keeping the tighter offset.
HRep normalize_rows(const Matrix& G, const Vector& h, double tol) {
  HRep out;
  std::vector<Eigen::Index> keep;
  Matrix Gn(G.rows(), G.cols());
  Vector hn(G.rows());
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    const double nrm = G.row(i).norm();
    if (nrm < 1e-13) {
      if (h(i) < -tol) out.infeasible = true;
      continue;
    }
    Gn.row(i) = G.row(i) / nrm;
    hn(i) = h(i) / nrm;
    bool merged = false;
    for (Eigen::Index k : keep) {
      if ((Gn.row(k) - Gn.row(i)).cwiseAbs().maxCoeff() < 1e-12) {
        hn(k) = std::min(hn(k), hn(i));
        merged = true;
        break;
      }
    }
    if (!merged) keep.push_back(i);
  }
  out.G.resize(static_cast<Eigen::Index>(keep.size()), G.cols());
  out.h.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    out.G.row(static_cast<Eigen::Index>(r)) = Gn.row(keep[r]);
    out.h(static_cast<Eigen::Index>(r)) = hn(keep[r]);
  }
  return out;
}

using Bits = std::vector<std::uint64_t>;

struct DdVertex {
  Vector p;
  Bits act;
};

inline void set_bit(Bits& b, int i) { b[static_cast<std::size_t>(i) >> 6] |= (std::uint64_t{1} << (i & 63)); }

inline int popcount(const Bits& b) {
  int c = 0;
  for (auto w : b) c += __builtin_popcountll(w);
  return c;
}

// Double description on {y | G y <= h} with h > 0 (origin interior) and the
// set contained in the box [lo, hi] strictly.
std::vector<Vector> double_description(const Matrix& G, const Vector& h, const Vector& lo,
                                       const Vector& hi, double tol) {
  const int d = static_cast<int>(G.cols());
  const int m = static_cast<int>(G.rows());
  const int total = m + 2 * d;
  const std::size_t words = static_cast<std::size_t>((total + 63) / 64);

  std::vector<DdVertex> verts;
  const int nbox = 1 << d;
  verts.reserve(static_cast<std::size_t>(nbox));
  for (int mask = 0; mask < nbox; ++mask) {
    DdVertex v{Vector(d), Bits(words, 0)};
    for (int k = 0; k < d; ++k) {
      if (mask & (1 << k)) {
        v.p(k) = hi(k);
        set_bit(v.act, m + 2 * k);
      } else {
        v.p(k) = lo(k);
        set_bit(v.act, m + 2 * k + 1);
      }
    }
    verts.push_back(std::move(v));
  }

  std::vector<double> s;
  for (int i = 0; i < m; ++i) {
    const auto nv = verts.size();
    s.resize(nv);
    bool any_minus = false;
    for (std::size_t v = 0; v < nv; ++v) {
      s[v] = h(i) - G.row(i).dot(verts[v].p);
      if (s[v] < -tol) any_minus = true;
    }
    if (!any_minus) {
      for (std::size_t v = 0; v < nv; ++v) {
        if (s[v] <= tol) set_bit(verts[v].act, i);
      }
      continue;
    }
    std::vector<std::size_t> plus;
    std::vector<std::size_t> minus;
    for (std::size_t v = 0; v < nv; ++v) {
      if (s[v] > tol) plus.push_back(v);
      else if (s[v] < -tol) minus.push_back(v);
    }
    std::vector<DdVertex> next;
    next.reserve(nv + plus.size());
    Bits common(words);
    for (std::size_t a : plus) {
      for (std::size_t b : minus) {
        int cnt = 0;
        for (std::size_t w = 0; w < words; ++w) {
          common[w] = verts[a].act[w] & verts[b].act[w];
          cnt += __builtin_popcountll(common[w]);
        }
        if (cnt < d - 1) continue;
        bool adjacent = true;
        for (std::size_t r = 0; r < nv && adjacent; ++r) {
          if (r == a || r == b) continue;
          bool superset = true;
          for (std::size_t w = 0; w < words; ++w) {
            if ((common[w] & ~verts[r].act[w]) != 0) {
              superset = false;
              break;
            }
          }
          if (superset) adjacent = false;
        }
        if (!adjacent) continue;
        const double t = s[a] / (s[a] - s[b]);
        DdVertex nvx{verts[a].p + t * (verts[b].p - verts[a].p), common};
        set_bit(nvx.act, i);
        next.push_back(std::move(nvx));
      }
    }
    for (std::size_t v = 0; v < nv; ++v) {
      if (s[v] >= -tol) {
        if (s[v] <= tol) set_bit(verts[v].act, i);
        next.push_back(std::move(verts[v]));
      }
    }
    verts = std::move(next);
  }
  std::vector<Vector> out;
  out.reserve(verts.size());
  for (auto& v : verts) out.push_back(std::move(v.p));
  return out;
}

int affine_rank(const std::vector<Vector>& pts, double tol) {
  if (pts.size() <= 1) return 0;
  Matrix M(pts[0].size(), static_cast<Eigen::Index>(pts.size() - 1));
  for (std::size_t j = 1; j < pts.size(); ++j) M.col(static_cast<Eigen::Index>(j - 1)) = pts[j] - pts[0];
  Eigen::JacobiSVD<Matrix> svd(M);
  int r = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()(i) > tol) ++r;
  }
  return r;
}

Matrix to_matrix(const std::vector<Vector>& pts, int dim) {
  Matrix M(dim, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t j = 0; j < pts.size(); ++j) M.col(static_cast<Eigen::Index>(j)) = pts[j];
  return M;
}

// Bounding box of {G x <= h} by 2d LPs. Throws kUnbounded; returns false
// when an LP finds the set infeasible (borderline-empty sets).
bool bounding_box(const Matrix& G, const Vector& h, Vector& lo, Vector& hi) {
  const Eigen::Index d = G.cols();
  lo.resize(d);
  hi.resize(d);
  for (Eigen::Index k = 0; k < d; ++k) {
    Vector e = Vector::Zero(d);
    e(k) = 1.0;
    const LpMaxResult up = lp_maximize(G, h, e);
    const LpMaxResult dn = lp_maximize(G, h, -e);
    if (up.status == LpStatus::kUnbounded || dn.status == LpStatus::kUnbounded) {
      throw Error(ErrorCode::kUnbounded, "polytope is unbounded along a coordinate axis");
    }
    if (up.status == LpStatus::kInfeasible || dn.status == LpStatus::kInfeasible) return false;
    if (up.status != LpStatus::kOptimal || dn.status != LpStatus::kOptimal) {
      throw Error(ErrorCode::kSolverFailure, "bounding-box LP failed");
    }
    hi(k) = up.value;
    lo(k) = -dn.value;
  }
  return true;
}

// Vertices of a normalized, nonempty bounded H-polytope; recursion handles
// implicit equalities by restricting to the affine hull.
std::vector<Vector> vertices_of(const Matrix& G, const Vector& h, double tol, int depth) {
  const int d = static_cast<int>(G.cols());
  if (d == 0) return {Vector(0)};
  if (G.rows() == 0) throw Error(ErrorCode::kUnbounded, "no constraints");
  auto [c, r] = chebyshev_center(G, h);
  if (r < -1e-10) return {};
  Vector lo, hi;
  if (!bounding_box(G, h, lo, hi)) return {};
  const double extent = std::max((hi - lo).maxCoeff(), 1e-300);
  if (r > 1e-8 * std::min(extent, 1.0) || depth > d) {
    // Full-dimensional: translate the Chebyshev center to the origin.
    const Vector ht = h - G * c;
    const Vector pad = (0.5 * (hi - lo)).array() + 1e-6 * std::max(extent, 1e-12);
    const Vector blo = lo - c - pad;
    const Vector bhi = hi - c + pad;
    const double eff_tol = tol * std::min(1.0, extent);
    auto pts = double_description(G, ht, blo, bhi, eff_tol);
    for (auto& p : pts) p += c;
    return pts;
  }
  // Degenerate: detect implicit equalities.
  const double eq_tol = 1e-8 * std::min(1.0, extent) + 1e-12;
  std::vector<Eigen::Index> eq_rows;
  for (Eigen::Index i = 0; i < G.rows(); ++i) {
    const LpMaxResult lo_i = lp_maximize(G, h, -G.row(i).transpose());
    if (lo_i.status != LpStatus::kOptimal) continue;
    const double min_val = -lo_i.value;
    if (h(i) - min_val <= eq_tol) eq_rows.push_back(i);
  }
  if (eq_rows.empty()) {
    // Thin but full-dimensional within tolerance: fall back to DD.
    return vertices_of(G, h, tol, d + 1);
  }
  Matrix GE(static_cast<Eigen::Index>(eq_rows.size()), d);
  Vector hE(static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t k = 0; k < eq_rows.size(); ++k) {
    GE.row(static_cast<Eigen::Index>(k)) = G.row(eq_rows[k]);
    hE(static_cast<Eigen::Index>(k)) = h(eq_rows[k]);
  }
  const Vector x0 = c + GE.completeOrthogonalDecomposition().solve(hE - GE * c);
  const Matrix N = null_space(GE, 1e-9);
  if (N.cols() == 0) return {x0};
  const HRep red = normalize_rows(G * N, h - G * x0, 1e-9);
  if (red.G.rows() == 0) throw Error(ErrorCode::kUnbounded, "affine hull unbounded");
  auto ys = vertices_of(red.G, red.h, tol, depth + 1);
  std::vector<Vector> out;
  out.reserve(ys.size());
  for (const auto& y : ys) out.push_back(x0 + N * y);
  return out;
}

// Full-dimensional hull of points in R^k: returns facets (normalized) and the
// indices of extreme points.
struct HullResult {
  Matrix G;
  Vector h;
  std::vector<int> vertex_idx;
};

double cross2(const Vector& o, const Vector& a, const Vector& b) {
  return (a(0) - o(0)) * (b(1) - o(1)) - (a(1) - o(1)) * (b(0) - o(0));
}

HullResult hull_1d(const std::vector<Vector>& pts) {
  int imin = 0;
  int imax = 0;
  for (int i = 1; i < static_cast<int>(pts.size()); ++i) {
    if (pts[i](0) < pts[imin](0)) imin = i;
    if (pts[i](0) > pts[imax](0)) imax = i;
  }
  HullResult out;
  out.G.resize(2, 1);
  out.G << 1.0, -1.0;
  out.h.resize(2);
  out.h << pts[imax](0), -pts[imin](0);
  out.vertex_idx = {imin, imax};
  return out;
}

HullResult hull_2d(const std::vector<Vector>& pts, double scale) {
  std::vector<int> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return pts[a](0) < pts[b](0) || (pts[a](0) == pts[b](0) && pts[a](1) < pts[b](1));
  });
  const double eps = 1e-12 * scale * scale;
  std::vector<int> hull(2 * idx.size());
  int k = 0;
  for (int i : idx) {
    while (k >= 2 && cross2(pts[hull[k - 2]], pts[hull[k - 1]], pts[i]) <= eps) --k;
    hull[k++] = i;
  }
  const int lower = k + 1;
  for (int t = static_cast<int>(idx.size()) - 2; t >= 0; --t) {
    const int i = idx[t];
    while (k >= lower && cross2(pts[hull[k - 2]], pts[hull[k - 1]], pts[i]) <= eps) --k;
    hull[k++] = i;
  }
  hull.resize(static_cast<std::size_t>(k - 1));
  HullResult out;
  const int nv = static_cast<int>(hull.size());
  out.G.resize(nv, 2);
  out.h.resize(nv);
  for (int e = 0; e < nv; ++e) {
    const Vector& a = pts[hull[e]];
    const Vector& b = pts[hull[(e + 1) % nv]];
    Vector nrm(2);
    nrm << (b(1) - a(1)), -(b(0) - a(0));
    nrm /= nrm.norm();
    out.G.row(e) = nrm.transpose();
    out.h(e) = nrm.dot(a);
  }
  out.vertex_idx = hull;
  return out;
}

HullResult hull_nd(const std::vector<Vector>& pts, double scale) {
  const int k = static_cast<int>(pts[0].size());
  Vector c = Vector::Zero(k);
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Matrix polarG(static_cast<Eigen::Index>(pts.size()), k);
  for (std::size_t j = 0; j < pts.size(); ++j) polarG.row(static_cast<Eigen::Index>(j)) = (pts[j] - c).transpose() / scale;
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(pts.size()));
  const HRep pn = normalize_rows(polarG, ones, 1e-12);
  const Matrix Y = enumerate_vertices(pn.G, pn.h, 1e-10);
  HullResult out;
  std::vector<Vector> rows;
  std::vector<double> offs;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    const Vector y = Y.col(j) / scale;
    const double nrm = y.norm();
    if (nrm < 1e-300) continue;
    rows.push_back(y / nrm);
    offs.push_back((1.0 + y.dot(c)) / nrm);
  }
  out.G.resize(static_cast<Eigen::Index>(rows.size()), k);
  out.h.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    out.G.row(static_cast<Eigen::Index>(j)) = rows[j].transpose();
    out.h(static_cast<Eigen::Index>(j)) = offs[j];
  }
  const double vtol = 1e-9 * scale;
  for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index f = 0; f < out.G.rows(); ++f) {
      if (std::abs(out.h(f) - out.G.row(f).dot(pts[i])) <= vtol) act.push_back(f);
    }
    if (static_cast<int>(act.size()) < k) continue;
    Matrix A(static_cast<Eigen::Index>(act.size()), k);
    for (std::size_t r = 0; r < act.size(); ++r) A.row(static_cast<Eigen::Index>(r)) = out.G.row(act[r]);
    Eigen::JacobiSVD<Matrix> svd(A);
    if (svd.singularValues()(k - 1) > 1e-7) out.vertex_idx.push_back(i);
  }
  return out;
}

}  // namespace

std::pair<Vector, double> chebyshev_center(const Matrix& G, const Vector& h) {
  const Eigen::Index d = G.cols();
  Matrix A(G.rows() + 1, d + 1);
  Vector b(G.rows() + 1);
  A.topLeftCorner(G.rows(), d) = G;
  A.topRightCorner(G.rows(), 1) = G.rowwise().norm();
  b.head(G.rows()) = h;
  A.row(G.rows()).setZero();
  A(G.rows(), d) = 1.0;
  b(G.rows()) = 1e9;
  Vector c = Vector::Zero(d + 1);
  c(d) = 1.0;
  const LpMaxResult r = lp_maximize(A, b, c);
  if (r.status != LpStatus::kOptimal) {
    throw Error(ErrorCode::kSolverFailure, "Chebyshev LP failed");
  }
  if (r.value >= 1e9 * (1 - 1e-9)) throw Error(ErrorCode::kUnbounded, "unbounded polytope");
  return {r.x.head(d), r.value};
}

Matrix unique_columns(const Matrix& pts, double tol) {
  // Sweep in order of the first coordinate; only points within tol of each
  // other in that coordinate can be duplicates.
  const Eigen::Index N = pts.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return pts(0, a) < pts(0, b) || (pts(0, a) == pts(0, b) && a < b);
  });
  std::vector<char> keep(static_cast<std::size_t>(N), 0);
  std::vector<Eigen::Index> kept_sorted;
  std::size_t window = 0;
  for (Eigen::Index j : order) {
    while (window < kept_sorted.size() && pts(0, kept_sorted[window]) < pts(0, j) - tol) ++window;
    bool dup = false;
    for (std::size_t q = window; q < kept_sorted.size(); ++q) {
      if ((pts.col(kept_sorted[q]) - pts.col(j)).cwiseAbs().maxCoeff() <= tol) {
        dup = true;
        break;
      }
    }
    if (!dup) {
      keep[static_cast<std::size_t>(j)] = 1;
      kept_sorted.push_back(j);
    }
  }
  Matrix out(pts.rows(), static_cast<Eigen::Index>(kept_sorted.size()));
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    if (keep[static_cast<std::size_t>(j)]) out.col(c++) = pts.col(j);
  }
  return out;
}

Matrix enumerate_vertices(const Matrix& G, const Vector& h, double tol) {
  const HRep n = normalize_rows(G, h, tol);
  const int d = static_cast<int>(G.cols());
  if (n.infeasible) return Matrix(d, 0);
  if (!lp_feasible(n.G, n.h)) return Matrix(d, 0);
  auto pts = vertices_of(n.G, n.h, tol, 0);
  Matrix M = to_matrix(pts, d);
  double scale = 1e-300;
  if (M.cols() > 0) scale = std::max(scale, M.cwiseAbs().maxCoeff());
  return unique_columns(M, 1e-9 * std::min(1.0, std::max(scale, 1e-6)));
}

// ---------------------------------------------------------------- Polytope

Polytope Polytope::from_trusted(const Matrix& G, const Vector& h, const Matrix& V, int affine_dim) {
  Polytope p;
  p.dim_ = static_cast<int>(G.cols());
  p.G_ = G;
  p.h_ = h;
  p.V_ = V;
  p.empty_ = V.cols() == 0;
  p.affine_dim_ = p.empty_ ? -1 : affine_dim;
  return p;
}

Polytope Polytope::empty(int dim) {
  Polytope p;
  p.dim_ = dim;
  p.empty_ = true;
  p.affine_dim_ = -1;
  p.G_ = Matrix(0, dim);
  p.h_ = Vector(0);
  p.V_ = Matrix(dim, 0);
  return p;
}

Polytope Polytope::from_halfspaces(const Matrix& G, const Vector& h, double tol) {
  if (G.rows() != h.size()) throw Error(ErrorCode::kDimensionMismatch, "from_halfspaces");
  const int d = static_cast<int>(G.cols());
  const HRep n = normalize_rows(G, h, tol);
  if (n.infeasible) return empty(d);
  if (n.G.rows() == 0) throw Error(ErrorCode::kUnbounded, "no constraints");
  if (!lp_feasible(n.G, n.h)) return empty(d);
  const Matrix V = enumerate_vertices(n.G, n.h, tol);
  if (V.cols() == 0) return empty(d);
  const double scale = std::max(V.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Vector> pts;
  for (Eigen::Index j = 0; j < V.cols(); ++j) pts.push_back(V.col(j));
  const int ad = affine_rank(pts, 1e-9 * std::max(scale, 1e-12));
  if (ad < d) return from_points(V, tol);

  // Keep facet-defining rows: their active vertices span a (d-1)-flat.
  const double vtol = 1e-8 * std::min(1.0, scale) + 1e-13;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n.G.rows(); ++i) {
    std::vector<Vector> act;
    for (Eigen::Index j = 0; j < V.cols(); ++j) {
      if (n.h(i) - n.G.row(i).dot(V.col(j)) <= vtol) act.push_back(V.col(j));
    }
    if (static_cast<int>(act.size()) >= d && affine_rank(act, 1e-9 * std::max(scale, 1e-12)) >= d - 1) {
      keep.push_back(i);
    }
  }
  Matrix Gk(static_cast<Eigen::Index>(keep.size()), d);
  Vector hk(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    Gk.row(static_cast<Eigen::Index>(r)) = n.G.row(keep[r]);
    hk(static_cast<Eigen::Index>(r)) = n.h(keep[r]);
  }
  return from_trusted(Gk, hk, V, d);
}

Polytope Polytope::from_points(const std::vector<Vector>& points, int dim, double tol) {
  Matrix M(dim, static_cast<Eigen::Index>(points.size()));
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points[j].size() != dim) throw Error(ErrorCode::kDimensionMismatch, "from_points");
    M.col(static_cast<Eigen::Index>(j)) = points[j];
  }
  return from_points(M, tol);
}

Polytope Polytope::from_points(const Matrix& points, double tol) {
  const int d = static_cast<int>(points.rows());
  if (points.cols() == 0) return empty(d);
  const double scale = std::max(points.cwiseAbs().maxCoeff(), 1e-300);
  const Matrix P = unique_columns(points, 1e-12 * std::max(scale, 1e-6));
  const Eigen::Index N = P.cols();
  const Vector c = P.rowwise().mean();
  Matrix C = P.colwise() - c;
  const double ext = std::max(C.cwiseAbs().maxCoeff(), 0.0);
  if (ext <= 1e-13 * std::max(scale, 1.0)) {
    // Single point: all coordinates are equalities.
    Matrix G(2 * d, d);
    Vector h(2 * d);
    G << Matrix::Identity(d, d), -Matrix::Identity(d, d);
    h << c, -c;
    Matrix V(d, 1);
    V.col(0) = c;
    return from_trusted(G, h, V, 0);
  }
  Eigen::JacobiSVD<Matrix> svd(C, Eigen::ComputeFullU);
  const Vector& sv = svd.singularValues();
  int k = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > 1e-9 * sv(0) && sv(i) > 1e-14) ++k;
  }
  (void)tol;
  Matrix U;
  if (k == d) {
    U = Matrix::Identity(d, d);
  } else {
    U = svd.matrixU().leftCols(k);
  }
  std::vector<Vector> ys;
  ys.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index j = 0; j < N; ++j) ys.push_back(U.transpose() * C.col(j));
  const double yscale = std::max(ext, 1e-300);
  HullResult hr;
  if (k == 1) hr = hull_1d(ys);
  else if (k == 2) hr = hull_2d(ys, yscale);
  else hr = hull_nd(ys, yscale);

  // Lift to the ambient space: G_k U^T (x - c) <= h_k.
  const Matrix Gl = hr.G * U.transpose();
  const Vector hl = hr.h + Gl * c;
  const int neq = d - k;
  Matrix G(Gl.rows() + 2 * neq, d);
  Vector h(Gl.rows() + 2 * neq);
  G.topRows(Gl.rows()) = Gl;
  h.head(Gl.rows()) = hl;
  if (neq > 0) {
    const Matrix Up = svd.matrixU().rightCols(neq);
    for (int e = 0; e < neq; ++e) {
      const Vector a = Up.col(e);
      const double off = a.dot(c);
      G.row(Gl.rows() + 2 * e) = a.transpose();
      h(Gl.rows() + 2 * e) = off;
      G.row(Gl.rows() + 2 * e + 1) = -a.transpose();
      h(Gl.rows() + 2 * e + 1) = -off;
    }
  }
  Matrix V(d, static_cast<Eigen::Index>(hr.vertex_idx.size()));
  for (std::size_t j = 0; j < hr.vertex_idx.size(); ++j) V.col(static_cast<Eigen::Index>(j)) = P.col(hr.vertex_idx[j]);
  return from_trusted(G, h, V, k);
}

Polytope Polytope::box(const Vector& lo, const Vector& hi) {
  const int d = static_cast<int>(lo.size());
  if (hi.size() != d) throw Error(ErrorCode::kDimensionMismatch, "box");
  if ((hi - lo).minCoeff() < 0) return empty(d);
  if ((hi - lo).minCoeff() == 0) {
    std::vector<Vector> pts;
    for (int mask = 0; mask < (1 << d); ++mask) {
      Vector p(d);
      for (int k = 0; k < d; ++k) p(k) = (mask & (1 << k)) ? hi(k) : lo(k);
      pts.push_back(p);
    }
    return from_points(pts, d);
  }
  Matrix G(2 * d, d);
  Vector h(2 * d);
  G << Matrix::Identity(d, d), -Matrix::Identity(d, d);
  h << hi, -lo;
  Matrix V(d, 1 << d);
  for (int mask = 0; mask < (1 << d); ++mask) {
    for (int k = 0; k < d; ++k) V(k, mask) = (mask & (1 << k)) ? hi(k) : lo(k);
  }
  return from_trusted(G, h, V, d);
}

Polytope Polytope::symmetric_box(const Vector& radius) { return box(-radius, radius); }

Polytope Polytope::point(const Vector& p) {
  Matrix V(p.size(), 1);
  V.col(0) = p;
  return from_points(V);
}

Polytope Polytope::zero(int dim) { return point(Vector::Zero(dim)); }

double Polytope::support(const Vector& d) const {
  if (d.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "support");
  if (empty_) throw Error(ErrorCode::kInfeasibleSet, "support of empty set");
  const LpMaxResult r = lp_maximize(G_, h_, d);
  if (r.status == LpStatus::kUnbounded) throw Error(ErrorCode::kUnbounded, "support");
  if (r.status == LpStatus::kInfeasible) throw Error(ErrorCode::kInfeasibleSet, "support");
  if (r.status != LpStatus::kOptimal) throw Error(ErrorCode::kSolverFailure, "support LP");
  return r.value;
}

double Polytope::support_vertices(const Vector& d) const {
  if (d.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "support_vertices");
  if (empty_) throw Error(ErrorCode::kInfeasibleSet, "support of empty set");
  return (d.transpose() * V_).maxCoeff();
}

Vector Polytope::support_point(const Vector& d) const {
  if (empty_) throw Error(ErrorCode::kInfeasibleSet, "support of empty set");
  Eigen::Index idx = 0;
  (d.transpose() * V_).maxCoeff(&idx);
  return V_.col(idx);
}

double Polytope::point_margin(const Vector& x) const {
  if (x.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "point_margin");
  if (empty_) return -kInf;
  if (G_.rows() == 0) return kInf;
  return (h_ - G_ * x).minCoeff();
}

bool Polytope::contains_point(const Vector& x, double tol) const { return point_margin(x) >= -tol; }

double Polytope::gauge(const Vector& x) const {
  if (h_.size() == 0 || h_.minCoeff() <= 0) {
    throw Error(ErrorCode::kOriginNotInterior, "gauge requires the origin in the interior");
  }
  return (G_ * x).cwiseQuotient(h_).maxCoeff();
}

Polytope Polytope::scaled(double s) const {
  if (empty_) return *this;
  if (s == 0.0) return zero(dim_);
  if (s > 0) return from_trusted(G_, h_ * s, V_ * s, affine_dim_);
  return from_trusted(-G_, -h_ * s, V_ * s, affine_dim_);
}

Polytope Polytope::translated(const Vector& t) const {
  if (empty_) return *this;
  return from_trusted(G_, h_ + G_ * t, V_.colwise() + t, affine_dim_);
}

double Polytope::radius() const {
  if (empty_) throw Error(ErrorCode::kEmptySet, "radius of empty set");
  return V_.colwise().norm().maxCoeff();
}

double Polytope::chebyshev_radius() const {
  if (empty_) return -1.0;
  if (affine_dim_ < dim_) return 0.0;
  return std::max(0.0, chebyshev_center(G_, h_).second);
}

Vector Polytope::centroid() const {
  if (empty_) throw Error(ErrorCode::kEmptySet, "centroid of empty set");
  return V_.rowwise().mean();
}

nlohmann::json Polytope::to_json() const {
  nlohmann::json j;
  j["dim"] = dim_;
  j["empty"] = empty_;
  j["affine_dim"] = affine_dim_;
  nlohmann::json G = nlohmann::json::array();
  for (Eigen::Index i = 0; i < G_.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(G_.cols()));
    for (Eigen::Index k = 0; k < G_.cols(); ++k) row[static_cast<std::size_t>(k)] = G_(i, k);
    G.push_back(row);
  }
  j["G"] = G;
  j["h"] = std::vector<double>(h_.data(), h_.data() + h_.size());
  nlohmann::json V = nlohmann::json::array();
  for (Eigen::Index c = 0; c < V_.cols(); ++c) {
    V.push_back(std::vector<double>(V_.col(c).data(), V_.col(c).data() + V_.rows()));
  }
  j["vertices"] = V;
  return j;
}

Polytope Polytope::from_json(const nlohmann::json& j) {
  int dim = j.value("dim", 0);
  if (j.value("empty", false)) return empty(dim);
  if (j.contains("G") && !j["G"].empty()) {
    const auto& Gj = j["G"];
    const int rows = static_cast<int>(Gj.size());
    const int cols = static_cast<int>(Gj[0].size());
    Matrix G(rows, cols);
    Vector h(rows);
    for (int i = 0; i < rows; ++i) {
      if (static_cast<int>(Gj[i].size()) != cols) throw Error(ErrorCode::kDimensionMismatch, "polytope G");
      for (int k = 0; k < cols; ++k) G(i, k) = Gj[i][k].get<double>();
      h(i) = j["h"][i].get<double>();
    }
    // A complete serialized document (both representations) is restored
    // verbatim once its vertices are checked against its facets, so that
    // serialize -> parse -> serialize is exact.
    if (j.contains("vertices") && j.contains("affine_dim") && !j["vertices"].empty()) {
      const auto& Vj = j["vertices"];
      Matrix V(cols, static_cast<Eigen::Index>(Vj.size()));
      for (std::size_t c = 0; c < Vj.size(); ++c) {
        if (static_cast<int>(Vj[c].size()) != cols) throw Error(ErrorCode::kDimensionMismatch, "polytope vertices");
        for (int k = 0; k < cols; ++k) V(k, static_cast<Eigen::Index>(c)) = Vj[c][k].get<double>();
      }
      const double scale = 1.0 + std::max(V.cwiseAbs().maxCoeff(), h.cwiseAbs().maxCoeff());
      const bool consistent = ((G * V).colwise() - h).maxCoeff() <= 1e-9 * scale;
      if (consistent) return from_trusted(G, h, V, j["affine_dim"].get<int>());
    }
    return from_halfspaces(G, h);
  }
  if (j.contains("vertices") && !j["vertices"].empty()) {
    const auto& Vj = j["vertices"];
    const int count = static_cast<int>(Vj.size());
    dim = static_cast<int>(Vj[0].size());
    Matrix V(dim, count);
    for (int c = 0; c < count; ++c) {
      for (int k = 0; k < dim; ++k) V(k, c) = Vj[c][k].get<double>();
    }
    return from_points(V);
  }
  throw Error(ErrorCode::kInvalidArgument, "polytope JSON needs G/h or vertices");
}

// ---------------------------------------------------------------- operations

Polytope minkowski_sum(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "minkowski_sum");
  if (a.is_empty() || b.is_empty()) return Polytope::empty(a.dim());
  const Matrix& Va = a.vertices();
  const Matrix& Vb = b.vertices();
  if (Vb.cols() == 1) return a.translated(Vb.col(0));
  if (Va.cols() == 1) return b.translated(Va.col(0));
  Matrix S(a.dim(), Va.cols() * Vb.cols());
  for (Eigen::Index i = 0; i < Va.cols(); ++i) {
    for (Eigen::Index j = 0; j < Vb.cols(); ++j) S.col(i * Vb.cols() + j) = Va.col(i) + Vb.col(j);
  }
  return Polytope::from_points(S);
}

Polytope pontryagin_diff(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "pontryagin_diff");
  if (b.is_empty()) throw Error(ErrorCode::kInvalidArgument, "subtrahend is empty");
  if (a.is_empty()) return a;
  Vector h = a.h();
  for (Eigen::Index i = 0; i < a.G().rows(); ++i) h(i) -= b.support_vertices(a.G().row(i).transpose());
  return Polytope::from_halfspaces(a.G(), h);
}

Polytope linear_image(const Matrix& m, const Polytope& p) {
  if (m.cols() != p.dim()) throw Error(ErrorCode::kDimensionMismatch, "linear_image");
  if (p.is_empty()) return Polytope::empty(static_cast<int>(m.rows()));
  return Polytope::from_points(m * p.vertices());
}

Polytope convex_hull_union(const std::vector<Polytope>& ps) {
  if (ps.empty()) throw Error(ErrorCode::kInvalidArgument, "empty-input: no polytopes");
  const int d = ps[0].dim();
  Eigen::Index total = 0;
  for (const auto& p : ps) {
    if (p.dim() != d) throw Error(ErrorCode::kDimensionMismatch, "convex_hull_union");
    total += p.vertices().cols();
  }
  Matrix all(d, total);
  Eigen::Index off = 0;
  for (const auto& p : ps) {
    if (p.is_empty()) continue;
    all.middleCols(off, p.vertices().cols()) = p.vertices();
    off += p.vertices().cols();
  }
  return Polytope::from_points(all.leftCols(off));
}

Polytope hull_of_images(const std::vector<Matrix>& ms, const Polytope& p) {
  if (ms.empty()) throw Error(ErrorCode::kInvalidArgument, "empty matrix family");
  if (p.is_empty()) return Polytope::empty(static_cast<int>(ms[0].rows()));
  const Eigen::Index nv = p.vertices().cols();
  Matrix all(ms[0].rows(), nv * static_cast<Eigen::Index>(ms.size()));
  for (std::size_t j = 0; j < ms.size(); ++j) {
    all.middleCols(static_cast<Eigen::Index>(j) * nv, nv) = ms[j] * p.vertices();
  }
  return Polytope::from_points(all);
}

Polytope intersect(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) throw Error(ErrorCode::kDimensionMismatch, "intersect");
  if (a.is_empty() || b.is_empty()) return Polytope::empty(a.dim());
  Matrix G(a.G().rows() + b.G().rows(), a.dim());
  Vector h(G.rows());
  G << a.G(), b.G();
  h << a.h(), b.h();
  return Polytope::from_halfspaces(G, h);
}

Polytope cartesian_product(const Polytope& a, const Polytope& b) {
  const int d = a.dim() + b.dim();
  if (a.is_empty() || b.is_empty()) return Polytope::empty(d);
  Matrix G = Matrix::Zero(a.G().rows() + b.G().rows(), d);
  G.topLeftCorner(a.G().rows(), a.dim()) = a.G();
  G.bottomRightCorner(b.G().rows(), b.dim()) = b.G();
  Vector h(G.rows());
  h << a.h(), b.h();
  const Matrix& Va = a.vertices();
  const Matrix& Vb = b.vertices();
  Matrix V(d, Va.cols() * Vb.cols());
  for (Eigen::Index i = 0; i < Va.cols(); ++i) {
    for (Eigen::Index j = 0; j < Vb.cols(); ++j) {
      V.col(i * Vb.cols() + j) << Va.col(i), Vb.col(j);
    }
  }
  return Polytope::from_trusted(G, h, V, a.affine_dim() + b.affine_dim());
}

double gauge_norm(const Matrix& m, const Polytope& w) {
  if (m.rows() != w.dim() || m.cols() != w.dim()) throw Error(ErrorCode::kDimensionMismatch, "gauge_norm");
  if (w.is_empty() || w.h().size() == 0 || w.h().minCoeff() <= 0) {
    throw Error(ErrorCode::kOriginNotInterior, "gauge_norm requires 0 in int(W)");
  }
  const Matrix img = w.G() * m * w.vertices();
  double best = 0.0;
  for (Eigen::Index j = 0; j < img.cols(); ++j) {
    best = std::max(best, img.col(j).cwiseQuotient(w.h()).maxCoeff());
  }
  return best;
}

Containment contains(const Polytope& outer, const Polytope& inner) {
  if (outer.dim() != inner.dim()) throw Error(ErrorCode::kDimensionMismatch, "contains");
  Containment c;
  if (inner.is_empty()) {
    c.contained = true;
    c.margin = kInf;
    return c;
  }
  if (outer.is_empty()) {
    c.contained = false;
    c.margin = -kInf;
    return c;
  }
  if (outer.G().rows() == 0) {
    c.contained = true;
    c.margin = kInf;
    return c;
  }
  const Matrix S = outer.G() * inner.vertices();
  const Vector worst = S.rowwise().maxCoeff();
  c.margin = (outer.h() - worst).minCoeff();
  c.contained = c.margin >= -kGeomTol;
  return c;
}

}  // namespace trddpc
