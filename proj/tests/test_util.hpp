#pragma once

#include "trddpc/data.hpp"

#include <initializer_list>
#include <random>

namespace trddpc::testing_util {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline Matrix mat(int rows, int cols, std::initializer_list<double> v) {
  Matrix out(rows, cols);
  auto it = v.begin();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = *it++;
  return out;
}

/// Simulates x+ = A x + B u with uniform inputs in [-u_amp, u_amp] and
/// measurements x_hat = x + w, w uniform in the box of radius w_amp.
inline Trajectory simulate_measured(const Matrix& A, const Matrix& B, const Vector& x0, int T, double u_amp,
                                    double w_amp, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uu(-u_amp, u_amp);
  std::uniform_real_distribution<double> ww(-w_amp, w_amp);
  Trajectory tr;
  tr.u.resize(B.cols(), T);
  tr.x_hat.resize(A.rows(), T);
  Vector x = x0;
  for (int t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < B.cols(); ++i) tr.u(i, t) = uu(rng);
    for (Eigen::Index i = 0; i < A.rows(); ++i) tr.x_hat(i, t) = x(i) + (w_amp > 0 ? ww(rng) : 0.0);
    x = A * x + B * tr.u.col(t);
  }
  return tr;
}

}  // namespace trddpc::testing_util
