#pragma once

#include "trddpc/consistency.hpp"
#include "trddpc/coverage.hpp"
#include "trddpc/data.hpp"
#include "trddpc/polytope.hpp"
#include "trddpc/synthesis.hpp"

#include <json.hpp>

#include <optional>
#include <string>

namespace trddpc {

/// Problem data and design options fixed before any data is seen.
struct DesignInputs {
  Polytope X;
  Polytope U;
  Polytope W;
  Matrix Q;
  Matrix R;
  int L = 1;
  double theta = 1.0;
  double eps_outer = 1e-3;
  double mu = 0.1;
};

/// Pass/fail summary of the standing assumptions for one design.
struct AssumptionReport {
  bool pe = false;                 // input persistently exciting of order L + n + 1
  bool gain = false;               // decay LMI certified (beta > 0)
  bool tube_rpi = false;           // co(∪ A_K E) ⊕ D ⊆ E
  bool tightened_nonempty = false; // Z and U_hat nonempty
  bool tail_deviation = false;     // last-row deviations of every column in V / theta
  bool terminal = false;           // Z_f RPI, Z_f ⊆ Z, K Z_f ⊕ V ⊆ U_hat
  bool tail_coverage = false;      // tail window in the convex hull of the columns
  double rpi_margin = 0.0;
  double deviation_slack = 0.0;
  double terminal_rpi_margin = 0.0;
  double terminal_state_margin = 0.0;
  double terminal_input_margin = 0.0;
  double coverage_residual = 0.0;

  bool all() const {
    return pe && gain && tube_rpi && tightened_nonempty && tail_deviation && terminal && tail_coverage;
  }
  nlohmann::json to_json() const;
};

/// Every offline ingredient the online controller and the audits consume.
struct DesignArtifacts {
  DesignInputs inputs;
  Trajectory traj;
  HankelSystem hankel;
  GammaCertificate gamma;
  int model_vertices = 0;
  GainCertificate gain;
  ClosedLoopFamily family;
  TerminalWeight weight;
  TubeDesign tube;
  TerminalDesign terminal;
  CoverageCertificate coverage;
  TailDeviationReport deviation;
  PeReport pe;
  IssCertificate iss;
  AssumptionReport assumptions;

  const Matrix& K() const { return gain.K; }
  int n() const { return hankel.n; }
  int m() const { return hankel.m; }
  int L() const { return hankel.L; }

  nlohmann::json to_json() const;
  static DesignArtifacts from_json(const nlohmann::json& j);
};

struct DesignOptions {
  /// Fixed gain: when set, the decay LMI is re-certified for this K instead
  /// of solving the gain SDP.
  std::optional<Matrix> K;
  /// Shape of the terminal excitation set V (in R^m).
  Polytope V_shape;
  /// Allow shrinking V_shape until the terminal conditions hold.
  bool shrink_V = true;
  /// When false, a failed terminal design is replaced by a best-effort set
  /// (recorded as a failed assumption) instead of throwing.
  bool strict_terminal = true;
};

/// Full offline pipeline: gamma*, consistency set, gain, terminal weight,
/// tube chain, terminal set, tail checks and ISS constants. Synthesis
/// failures propagate as trddpc::Error; the tail checks are recorded in the
/// assumption report instead of throwing.
DesignArtifacts design_from_data(const Trajectory& traj, const DesignInputs& in, const DesignOptions& opts);

/// Recomputes the assumption report of existing artifacts.
AssumptionReport check_assumptions(const DesignArtifacts& art);

}  // namespace trddpc
