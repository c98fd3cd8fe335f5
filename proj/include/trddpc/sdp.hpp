#pragma once

#include "trddpc/linalg.hpp"

#include <vector>

namespace trddpc {

/// Linear matrix inequality block F0 + sum_k x_k F[k] >= 0 (symmetric).
struct LmiBlock {
  Matrix F0;
  std::vector<Matrix> F;  // one per decision variable (may be empty = zero)
};

struct SdpOptions {
  double gap_tol = 1e-9;       // stop when (#rows)/t < gap_tol
  double t0 = 1.0;
  double t_growth = 8.0;
  int max_newton = 100;        // per centering step
  int max_outer = 80;
};

struct SdpResult {
  bool converged = false;
  Vector x;
  double objective = 0.0;
  int newton_steps = 0;
  std::vector<double> block_min_eig;
};

/// Maximizes c^T x subject to every block being positive semidefinite, with
/// a log-det barrier path-following method started from the strictly
/// feasible point x0. The feasible set must be bounded.
SdpResult solve_lmi_max(const Vector& c, const std::vector<LmiBlock>& blocks, const Vector& x0,
                        const SdpOptions& opts = {});

/// Value of one block at x.
Matrix lmi_value(const LmiBlock& b, const Vector& x);

}  // namespace trddpc
