#pragma once

#include <Eigen/Dense>

#include <vector>

namespace trddpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Kronecker product of two dense matrices.
Matrix kron(const Matrix& a, const Matrix& b);

/// Row-major vectorization of a matrix: [row 0, row 1, ...].
Vector vec_rows(const Matrix& m);

/// Inverse of vec_rows.
Matrix unvec_rows(const Vector& v, int rows, int cols);

/// Smallest / largest eigenvalue of the symmetric part of a square matrix.
double min_eig(const Matrix& m);
double max_eig(const Matrix& m);

/// Symmetric square root (and inverse square root) of a positive definite matrix.
Matrix sym_sqrt(const Matrix& m);
Matrix sym_inv_sqrt(const Matrix& m);

/// Spectral radius of a square matrix.
double spectral_radius(const Matrix& m);

/// Orthonormal basis of the null space of `m` (columns), threshold relative to
/// the largest singular value.
Matrix null_space(const Matrix& m, double rel_tol = 1e-10);

Matrix stack_columns(const std::vector<Vector>& columns, int rows);

}  // namespace trddpc
