#pragma once

#include "trddpc/consistency.hpp"
#include "trddpc/polytope.hpp"
#include "trddpc/sdp.hpp"

#include <string>
#include <vector>

namespace trddpc {

struct GainCertificate {
  Matrix K;
  Matrix P;
  Matrix Y;
  double beta = 0.0;
  /// Minimum eigenvalue of each vertex LMI at the solution.
  std::vector<double> vertex_min_eig;
  bool fixed_gain = false;

  double min_vertex_eig() const;
};

struct GainSdpOptions {
  double y_bound = 1e4;  // |Y_ij| <= y_bound keeps the feasible set compact
  SdpOptions sdp;
};

/// Maximizes beta s.t. [[P - beta I, A_j P + B_j Y], [., P]] >= 0 on every
/// vertex, trace(P) = n; K = Y P^{-1}. Throws kSdpInfeasible when beta <= 0.
GainCertificate solve_gain_sdp(const std::vector<Matrix>& A, const std::vector<Matrix>& B,
                               const GainSdpOptions& opts = {});
/// Vertex list taken from an enumerated consistency set.
GainCertificate solve_gain_sdp(const ConsistencySet& set, const GainSdpOptions& opts = {});

/// Same decay LMI with the gain held fixed (closed-loop vertices A_j + B_j K).
GainCertificate certify_fixed_gain(const std::vector<Matrix>& A_K, const Matrix& K,
                                   const GainSdpOptions& opts = {});

/// max over vertices of the vertex LMI violation (>= 0 means feasible).
std::vector<double> gain_lmi_residuals(const GainCertificate& cert, const std::vector<Matrix>& A_K);

struct TerminalWeight {
  Matrix P_L;
  double lambda = 0.0;
  double c_p = 0.0;
  double eta = 0.0;
  double mu = 0.1;
};

/// P_L = c_p P^{-1} with c_p = (1 + mu) lambda_max(P^{1/2} S P^{1/2}) / lambda,
/// S = Q + K^T R K, lambda = beta / lambda_max(P). Throws kMarginNonpositive.
TerminalWeight terminal_weight(const GainCertificate& cert, const Matrix& Q, const Matrix& R, double mu = 0.1,
                               int max_retries = 8);

struct RpiResult {
  Polytope set;
  int iterations = 0;
  /// min over facets of (offset - support of A F ⊕ Dist); >= 0 certifies.
  double margin = 0.0;
};

/// Minimum slack of the containment co(∪ A_j F) ⊕ Dist ⊆ F.
double rpi_margin(const std::vector<Matrix>& family, const Polytope& F, const Polytope& dist);

/// Outer approximation of the minimal RPI set: F_0 = {0},
/// F_{k+1} = co(∪ A_j F_k) ⊕ Dist; returns the first (1+eps) F_k that passes
/// the RPI containment check. Throws kNoTermination.
RpiResult rpi_synthesis(const std::vector<Matrix>& family, const Polytope& dist, double eps_outer = 1e-3,
                        int max_iter = 5000);

struct TubeDesign {
  double theta = 1.0;
  double gamma_star = 0.0;
  Polytope E;
  Polytope E_w;
  Polytope E_on;
  Polytope E_off;
  Polytope D;
  Polytope Z;
  Polytope U_hat;
  double rpi_margin = 0.0;
  int rpi_iterations = 0;
};

/// E_w = gamma W, E_off = theta (1 + gamma) W, D = E_off ⊕ E_w ⊕ W.
Polytope disturbance_set(const Polytope& W, double gamma_star, double theta);

/// Tightening chain given a certified E. Throws kTightenedSetEmpty naming
/// the emptied difference and the largest noise scale keeping both sets
/// nonempty.
TubeDesign tighten(const Polytope& X, const Polytope& U, const Polytope& W, double gamma_star, const Polytope& E,
                   const std::vector<Matrix>& A_K, const Matrix& K, double theta = 1.0);

/// D -> E (RPI synthesis) -> E_on -> Z, U_hat.
TubeDesign design_tube(const Polytope& X, const Polytope& U, const Polytope& W, double gamma_star,
                       const std::vector<Matrix>& A_K, const Matrix& K, double theta = 1.0,
                       double eps_outer = 1e-3);

struct TerminalDesign {
  Polytope Z_f;
  Polytope V_poly;
  Polytope Omega;
  double v_scale = 1.0;  // scale applied to the requested V shape
  double margin_rpi = 0.0;
  double margin_state = 0.0;  // Z_f ⊆ Z
  double margin_input = 0.0;  // K Z_f ⊕ V ⊆ U_hat
  int rpi_iterations = 0;

  bool certified() const { return margin_rpi >= 0 && margin_state >= 0 && margin_input >= 0; }
};

/// Omega = theta (1 + gamma) W ⊕ co(∪ B_j V).
Polytope terminal_disturbance(const Polytope& W, double gamma_star, const std::vector<Matrix>& B_set,
                              const Polytope& V, double theta);

/// Terminal set for the affine local law. With allow_shrink the V shape is
/// scaled by bisection to the largest factor in [0, 1] passing all three
/// conditions. Throws kTerminalDesignInfeasible.
TerminalDesign terminal_set(const Polytope& Z, const Polytope& U_hat, const std::vector<Matrix>& A_K,
                            const std::vector<Matrix>& B_set, const Polytope& W, double gamma_star,
                            const Matrix& K, const Polytope& V_shape, double eps_outer = 1e-3,
                            double theta = 1.0, bool allow_shrink = true);

struct IssCertificate {
  double eps = 0.0;
  double beta_h = 0.0;
  double alpha = 0.0;
  double c_delta = 0.0;
  double c_V = 0.0;
  double d_bar_V = 0.0;
  double kappa = 0.0;
  double q_lower = 0.0;
  double alpha_V_lower = 0.0;
  double alpha_V_upper = 0.0;
  double V_max = 0.0;
  double c_hat = 0.0;        // full constant including the sandwich terms
  double c_hat_tight = 0.0;  // (c_delta + q beta_h^2) eps^2 + c_V
  double lambda_max_PL = 0.0;

  double c_omega() const { return c_delta * eps * eps + c_V; }
};

/// Closed-form ISS constants. Throws kLambdaGeOne when lambda >= 1.
IssCertificate iss_constants(const TubeDesign& tube, const TerminalDesign& term, const TerminalWeight& tw,
                             const std::vector<Matrix>& B_set, const Polytope& X, const Polytope& W,
                             const Matrix& Q, const Matrix& R, int L);

/// max of x^T M x over the vertices of P (exact for convex quadratics).
double max_quadratic_over(const Polytope& P, const Matrix& M);

}  // namespace trddpc
