#include "trddpc/data.hpp"

#include "trddpc/error.hpp"

#include <Eigen/SVD>

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace trddpc {

void Trajectory::validate() const {
  if (u.cols() != x_hat.cols()) throw Error(ErrorCode::kDimensionMismatch, "trajectory lengths differ");
  if (u.cols() < 1) throw Error(ErrorCode::kInvalidArgument, "trajectory is empty");
  if (u.rows() < 1 || x_hat.rows() < 1) throw Error(ErrorCode::kDimensionMismatch, "zero signal dimension");
}

Matrix block_hankel(const Matrix& seq, int depth) {
  const int T = static_cast<int>(seq.cols());
  const int dim = static_cast<int>(seq.rows());
  if (depth < 1 || depth > T) throw Error(ErrorCode::kDepthTooLarge, "Hankel depth exceeds data length");
  const int cols = T - depth + 1;
  Matrix H(depth * dim, cols);
  for (int ell = 0; ell < depth; ++ell) H.middleRows(ell * dim, dim) = seq.middleCols(ell, cols);
  return H;
}

HankelSystem build_hankel(const Trajectory& traj, int depth) {
  traj.validate();
  HankelSystem hs;
  hs.H_u = block_hankel(traj.u, depth);
  hs.H_x = block_hankel(traj.x_hat, depth);
  hs.L = depth - 1;
  hs.T = traj.length();
  hs.m = traj.m();
  hs.n = traj.n();
  return hs;
}

PeReport check_pe(const Matrix& u, int order) {
  PeReport r;
  const int m = static_cast<int>(u.rows());
  r.required = m * order;
  const int T = static_cast<int>(u.cols());
  if (order < 1 || T < order) {
    r.reason = "data too short for the requested order";
    return r;
  }
  const Matrix H = block_hankel(u, order);
  Eigen::JacobiSVD<Matrix> svd(H);
  r.singular_values = svd.singularValues();
  const double smax = r.singular_values.size() ? r.singular_values(0) : 0.0;
  r.threshold = smax * static_cast<double>(std::max(H.rows(), H.cols())) *
                std::numeric_limits<double>::epsilon() * 100.0;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values(i) > r.threshold) ++r.rank;
  }
  if (smax == 0.0) r.rank = 0;
  r.ok = r.rank == r.required;
  if (!r.ok) {
    if (H.cols() < r.required) {
      r.reason = "fewer Hankel columns than m * order";
    } else {
      r.reason = "rank " + std::to_string(r.rank) + " < required " + std::to_string(r.required);
    }
  }
  return r;
}

std::pair<Matrix, Matrix> closed_loop_hankel(const HankelSystem& hs, const Matrix& K) {
  if (K.rows() != hs.m || K.cols() != hs.n) throw Error(ErrorCode::kDimensionMismatch, "closed_loop_hankel K");
  Matrix Hv = hs.H_u;
  for (int ell = 0; ell <= hs.L; ++ell) Hv.middleRows(ell * hs.m, hs.m) -= K * hs.x_block(ell);
  return {Hv, hs.H_x};
}

bool SimplexCoefficient::valid(double tol) const {
  if (g.size() == 0) return false;
  return g.minCoeff() >= -tol && std::abs(g.sum() - theta) <= tol;
}

std::pair<Matrix, Matrix> trajectory_from_coefficient(const HankelSystem& hs, const Matrix& K,
                                                      const SimplexCoefficient& g) {
  if (g.g.size() != hs.columns()) throw Error(ErrorCode::kDimensionMismatch, "coefficient length");
  if (K.rows() != hs.m || K.cols() != hs.n) throw Error(ErrorCode::kDimensionMismatch, "gain");
  Matrix v(hs.m, hs.L + 1);
  Matrix z(hs.n, hs.L + 1);
  for (int ell = 0; ell <= hs.L; ++ell) {
    z.col(ell) = hs.x_block(ell) * g.g;
    v.col(ell) = hs.u_block(ell) * g.g - K * z.col(ell);
  }
  return {v, z};
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  traj.validate();
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  out << "t";
  for (int i = 0; i < traj.m(); ++i) out << ",u_" << (i + 1);
  for (int i = 0; i < traj.n(); ++i) out << ",xhat_" << (i + 1);
  out << "\n";
  char buf[64];
  for (int t = 0; t < traj.length(); ++t) {
    out << t;
    for (int i = 0; i < traj.m(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", traj.u(i, t));
      out << ',' << buf;
    }
    for (int i = 0; i < traj.n(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", traj.x_hat(i, t));
      out << ',' << buf;
    }
    out << "\n";
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path);
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "empty trajectory file " + path);
  int m = 0;
  int n = 0;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("u_", 0) == 0) ++m;
      else if (col.rfind("xhat_", 0) == 0) ++n;
    }
  }
  if (m == 0 || n == 0) throw Error(ErrorCode::kIo, "trajectory header lacks u_/xhat_ columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != 1 + m + n) throw Error(ErrorCode::kIo, "malformed row in " + path);
    rows.push_back(std::move(vals));
  }
  Trajectory traj;
  const int T = static_cast<int>(rows.size());
  traj.u.resize(m, T);
  traj.x_hat.resize(n, T);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < m; ++i) traj.u(i, t) = rows[t][1 + i];
    for (int i = 0; i < n; ++i) traj.x_hat(i, t) = rows[t][1 + m + i];
  }
  traj.validate();
  return traj;
}

}  // namespace trddpc
