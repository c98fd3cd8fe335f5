#pragma once

#include "trddpc/linalg.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace trddpc {

/// Input / measured-state trajectory. Samples are stored column-wise
/// (u: m x T, x_hat: n x T) so each time step is one contiguous column.
struct Trajectory {
  Matrix u;
  Matrix x_hat;
  std::string noise_ref;
  std::uint64_t seed = 0;

  int length() const { return static_cast<int>(u.cols()); }
  int m() const { return static_cast<int>(u.rows()); }
  int n() const { return static_cast<int>(x_hat.rows()); }
  /// Throws kDimensionMismatch / kInvalidArgument on inconsistent data.
  void validate() const;
};

/// Block Hankel matrix of depth `depth` built from the columns of `seq`
/// (rows: depth * dim, columns: T - depth + 1).
Matrix block_hankel(const Matrix& seq, int depth);

/// Input and measured-state Hankel matrices of depth L + 1.
struct HankelSystem {
  Matrix H_u;
  Matrix H_x;
  int L = 0;
  int T = 0;
  int m = 0;
  int n = 0;

  int columns() const { return static_cast<int>(H_u.cols()); }
  /// Block row ell (0-based) of the input / state Hankel.
  Eigen::Block<const Matrix> u_block(int ell) const { return H_u.middleRows(ell * m, m); }
  Eigen::Block<const Matrix> x_block(int ell) const { return H_x.middleRows(ell * n, n); }
  /// Block rows i..j inclusive.
  Eigen::Block<const Matrix> u_blocks(int i, int j) const { return H_u.middleRows(i * m, (j - i + 1) * m); }
  Eigen::Block<const Matrix> x_blocks(int i, int j) const { return H_x.middleRows(i * n, (j - i + 1) * n); }
};

/// Hankel system of depth `depth` (= L + 1). Throws kDepthTooLarge.
HankelSystem build_hankel(const Trajectory& traj, int depth);

struct PeReport {
  bool ok = false;
  int rank = 0;
  int required = 0;
  double threshold = 0.0;
  Vector singular_values;
  std::string reason;
};

/// Persistency of excitation of order `order`: rank of the depth-`order`
/// Hankel of u equals m * order.
PeReport check_pe(const Matrix& u, int order);

/// (H_u - (I ⊗ K) H_x, H_x).
std::pair<Matrix, Matrix> closed_loop_hankel(const HankelSystem& hs, const Matrix& K);

/// Nonnegative weights summing to theta.
struct SimplexCoefficient {
  Vector g;
  double theta = 1.0;

  /// True when g >= -tol and |sum(g) - theta| <= tol.
  bool valid(double tol = 1e-10) const;
};

/// Predicted sequences (v: m x (L+1), z: n x (L+1)) realized by g.
std::pair<Matrix, Matrix> trajectory_from_coefficient(const HankelSystem& hs, const Matrix& K,
                                                      const SimplexCoefficient& g);

/// CSV with columns t, u_1..u_m, xhat_1..xhat_n (17 significant digits).
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);

}  // namespace trddpc
