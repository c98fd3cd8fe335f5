#pragma once

#include "trddpc/data.hpp"
#include "trddpc/polytope.hpp"

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace trddpc {

struct TailDeviationReport {
  bool ok = false;
  Matrix deviations;          // m x (T-L): (H_u[L] - K H_x[L]) e_i
  std::vector<double> slack;  // V.point_margin per column
  std::vector<int> failing;   // column indices with negative slack
  double min_slack = 0.0;
};

/// Last-block-row deviations of every Hankel column checked against V.
TailDeviationReport check_tail_deviation(const HankelSystem& hs, const Matrix& K, const Polytope& V,
                                         double tol = 1e-9);

struct CoverageCertificate {
  bool feasible = false;
  SimplexCoefficient h;
  /// L1 equality residual of the phase-1 minimizer (0 when feasible).
  double residual = 0.0;
  /// max |A_tail h - b_tail| of the returned h.
  double max_abs_error = 0.0;
  int support = 0;
};

/// LP: find h >= 0, 1'h = 1, [H_u[0:L-1]; H_x[0:L-1]] h = tail window.
CoverageCertificate check_tail_coverage(const HankelSystem& hs, const Trajectory& traj);

/// Tail system (A_tail, b_tail) of the coverage LP.
std::pair<Matrix, Vector> tail_system(const HankelSystem& hs, const Trajectory& traj);

/// Prunes a feasible simplex solution of A h = b to a support whose columns
/// of [A; 1'] are linearly independent (at most rank + 1 entries).
Vector caratheodory_reduce(const Matrix& A, const Vector& h, double tol = 1e-12);

/// Interactive plant used by the data-collection procedure.
struct PlantOracle {
  std::function<void()> reset;                   // start a fresh experiment
  std::function<Vector()> measure;               // current noisy state
  std::function<void(const Vector&)> apply;      // advance one step
};

struct CollectOptions {
  int L = 1;
  int T_loc = 0;
  int T_pre2 = 0;
  double prefix_amplitude = 1.0;
  /// Input rule for the free prefix phase; when empty the prefix inputs are
  /// uniform in [-prefix_amplitude, prefix_amplitude]^m.
  std::function<Vector(const Vector& x_hat, std::mt19937_64& rng)> prefix_policy;
  int retry_cap = 20;
  double growth = 1.5;
};

struct CollectResult {
  Trajectory traj;
  CoverageCertificate coverage;
  TailDeviationReport deviation;
  PeReport pe;
  int attempts = 0;
  std::vector<int> t_loc_history;
  std::vector<double> residual_history;
};

/// Four-phase experiment (prefix, local excitation over vert(V), recovery
/// and tail under u = K x_hat) repeated with growing T_loc until the tail
/// coverage LP and the PE test pass. Throws kPersistencyOfExcitation or
/// kRetryCapExceeded.
CollectResult collect_data(const PlantOracle& plant, const Matrix& K, const Polytope& V, const CollectOptions& opts,
                           std::mt19937_64& rng);

}  // namespace trddpc
