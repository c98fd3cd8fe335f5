#include "trddpc/design.hpp"

#include "trddpc/error.hpp"
#include "trddpc/json_util.hpp"

namespace trddpc {

namespace {

nlohmann::json matrices_to_json(const std::vector<Matrix>& ms) {
  nlohmann::json j = nlohmann::json::array();
  for (const Matrix& m : ms) j.push_back(matrix_to_json(m));
  return j;
}

std::vector<Matrix> matrices_from_json(const nlohmann::json& j) {
  std::vector<Matrix> out;
  for (const auto& e : j) out.push_back(matrix_from_json(e));
  return out;
}

Matrix mat_or_empty(const nlohmann::json& j, const char* key) {
  return j.contains(key) ? matrix_from_json(j[key]) : Matrix();
}

// Best-effort terminal set used when the strict terminal conditions cannot
// be met: the RPI set for the requested V cut down to the state and input
// constraints. Margins are recorded so the failure stays visible.
TerminalDesign fallback_terminal(const DesignArtifacts& a, const Polytope& V, const DesignInputs& in) {
  TerminalDesign t;
  t.V_poly = V;
  t.v_scale = 1.0;
  t.Omega = terminal_disturbance(in.W, a.gamma.gamma, a.family.B_set.vertices, V, in.theta);
  const RpiResult r = rpi_synthesis(a.family.A_K.vertices, t.Omega, in.eps_outer);
  t.rpi_iterations = r.iterations;
  Polytope U_room = pontryagin_diff(a.tube.U_hat, V);
  if (U_room.is_empty()) U_room = a.tube.U_hat;
  const Matrix Gk = U_room.G() * a.gain.K;
  const Polytope input_ok = Polytope::from_halfspaces(
      (Matrix(Gk.rows() + a.tube.Z.G().rows(), Gk.cols()) << Gk, a.tube.Z.G()).finished(),
      (Vector(Gk.rows() + a.tube.Z.h().size()) << U_room.h(), a.tube.Z.h()).finished());
  t.Z_f = intersect(r.set, input_ok);
  if (t.Z_f.is_empty()) t.Z_f = Polytope::zero(a.n());
  t.margin_rpi = rpi_margin(a.family.A_K.vertices, t.Z_f, t.Omega);
  t.margin_state = contains(a.tube.Z, t.Z_f).margin;
  t.margin_input = contains(a.tube.U_hat, minkowski_sum(linear_image(a.gain.K, t.Z_f), V)).margin;
  return t;
}

}  // namespace

nlohmann::json AssumptionReport::to_json() const {
  return {{"persistency_of_excitation", pe},
          {"gain_certified", gain},
          {"tube_rpi", tube_rpi},
          {"tightened_sets_nonempty", tightened_nonempty},
          {"tail_deviation_in_V", tail_deviation},
          {"terminal_set", terminal},
          {"tail_coverage", tail_coverage},
          {"rpi_margin", rpi_margin},
          {"deviation_slack", deviation_slack},
          {"terminal_rpi_margin", terminal_rpi_margin},
          {"terminal_state_margin", terminal_state_margin},
          {"terminal_input_margin", terminal_input_margin},
          {"coverage_residual", coverage_residual},
          {"all", all()}};
}

AssumptionReport check_assumptions(const DesignArtifacts& art) {
  AssumptionReport r;
  const int n = art.n();
  r.pe = check_pe(art.traj.u, art.L() + n + 1).ok;
  r.gain = art.gain.beta > 0 && art.gain.min_vertex_eig() >= -1e-7;
  r.rpi_margin = rpi_margin(art.family.A_K.vertices, art.tube.E, art.tube.D);
  r.tube_rpi = r.rpi_margin >= 0.0;
  r.tightened_nonempty = !art.tube.Z.is_empty() && !art.tube.U_hat.is_empty();
  const TailDeviationReport dev = check_tail_deviation(art.hankel, art.K(), art.terminal.V_poly.scaled(1.0 / art.inputs.theta));
  r.tail_deviation = dev.ok;
  r.deviation_slack = dev.min_slack;
  r.terminal_rpi_margin = rpi_margin(art.family.A_K.vertices, art.terminal.Z_f, art.terminal.Omega);
  r.terminal_state_margin = contains(art.tube.Z, art.terminal.Z_f).margin;
  r.terminal_input_margin =
      contains(art.tube.U_hat, minkowski_sum(linear_image(art.K(), art.terminal.Z_f), art.terminal.V_poly)).margin;
  r.terminal = r.terminal_rpi_margin >= 0 && r.terminal_state_margin >= 0 && r.terminal_input_margin >= 0;
  const CoverageCertificate cov = check_tail_coverage(art.hankel, art.traj);
  r.tail_coverage = cov.feasible;
  r.coverage_residual = cov.residual;
  return r;
}

DesignArtifacts design_from_data(const Trajectory& traj, const DesignInputs& in, const DesignOptions& opts) {
  traj.validate();
  const int n = traj.n();
  const int m = traj.m();
  if (in.X.dim() != n || in.W.dim() != n || in.U.dim() != m) {
    throw Error(ErrorCode::kDimensionMismatch, "constraint sets do not match the trajectory dimensions");
  }
  if (in.Q.rows() != n || in.R.rows() != m || min_eig(in.Q) <= 0 || min_eig(in.R) <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "Q and R must be positive definite of matching size");
  }
  DesignArtifacts a;
  a.inputs = in;
  a.traj = traj;
  a.hankel = build_hankel(traj, in.L + 1);
  a.pe = check_pe(traj.u, in.L + n + 1);
  if (!a.pe.ok) {
    throw Error(ErrorCode::kPersistencyOfExcitation,
                "input not persistently exciting of order " + std::to_string(in.L + n + 1) + ": " + a.pe.reason);
  }

  a.gamma = certify_gamma_star(traj, in.W);
  const ConsistencySet I = full_consistency_set(traj, in.W, a.gamma.gamma, true);
  a.model_vertices = I.has_vertices ? static_cast<int>(I.vertices.cols()) : 0;
  if (opts.K) {
    const ClosedLoopFamily fam = closed_loop_family(I, *opts.K);
    a.gain = certify_fixed_gain(fam.A_K.vertices, *opts.K);
    a.family = fam;
  } else {
    a.gain = solve_gain_sdp(I);
    a.family = closed_loop_family(I, a.gain.K);
  }
  a.weight = terminal_weight(a.gain, in.Q, in.R, in.mu);
  a.tube = design_tube(in.X, in.U, in.W, a.gamma.gamma, a.family.A_K.vertices, a.gain.K, in.theta, in.eps_outer);
  const Polytope V_shape = opts.V_shape.dim() == m ? opts.V_shape : in.U.scaled(0.0);
  try {
    a.terminal = terminal_set(a.tube.Z, a.tube.U_hat, a.family.A_K.vertices, a.family.B_set.vertices, in.W,
                              a.gamma.gamma, a.gain.K, V_shape, in.eps_outer, in.theta, opts.shrink_V);
  } catch (const Error& e) {
    if (opts.strict_terminal || e.code() != ErrorCode::kTerminalDesignInfeasible) throw;
    a.terminal = fallback_terminal(a, V_shape, in);
  }
  a.coverage = check_tail_coverage(a.hankel, traj);
  a.deviation = check_tail_deviation(a.hankel, a.gain.K, a.terminal.V_poly.scaled(1.0 / in.theta));
  a.iss = iss_constants(a.tube, a.terminal, a.weight, a.family.B_set.vertices, in.X, in.W, in.Q, in.R, in.L);
  a.assumptions = check_assumptions(a);
  return a;
}

nlohmann::json DesignArtifacts::to_json() const {
  nlohmann::json j;
  j["inputs"] = {{"X", inputs.X.to_json()},
                 {"U", inputs.U.to_json()},
                 {"W", inputs.W.to_json()},
                 {"Q", matrix_to_json(inputs.Q)},
                 {"R", matrix_to_json(inputs.R)},
                 {"L", inputs.L},
                 {"theta", inputs.theta},
                 {"eps_outer", inputs.eps_outer},
                 {"mu", inputs.mu}};
  j["trajectory"] = {{"u", matrix_to_json(traj.u)}, {"x_hat", matrix_to_json(traj.x_hat)}};
  j["gamma_star"] = {{"gamma", gamma.gamma},
                     {"f_gamma", gamma.f_gamma},
                     {"start", gamma.start},
                     {"iterations", gamma.iterations}};
  j["model_vertices"] = model_vertices;
  j["gain"] = {{"K", matrix_to_json(gain.K)},
               {"P", matrix_to_json(gain.P)},
               {"Y", matrix_to_json(gain.Y)},
               {"beta", gain.beta},
               {"fixed_gain", gain.fixed_gain},
               {"vertex_min_eig", gain.vertex_min_eig}};
  j["family"] = {{"A_K", matrices_to_json(family.A_K.vertices)}, {"B", matrices_to_json(family.B_set.vertices)}};
  j["terminal_weight"] = {{"P_L", matrix_to_json(weight.P_L)},
                          {"lambda", weight.lambda},
                          {"c_p", weight.c_p},
                          {"eta", weight.eta},
                          {"mu", weight.mu}};
  j["tube"] = {{"theta", tube.theta},
               {"gamma_star", tube.gamma_star},
               {"E", tube.E.to_json()},
               {"E_w", tube.E_w.to_json()},
               {"E_on", tube.E_on.to_json()},
               {"E_off", tube.E_off.to_json()},
               {"D", tube.D.to_json()},
               {"Z", tube.Z.to_json()},
               {"U_hat", tube.U_hat.to_json()},
               {"rpi_margin", tube.rpi_margin},
               {"rpi_iterations", tube.rpi_iterations}};
  j["terminal"] = {{"Z_f", terminal.Z_f.to_json()},
                   {"V", terminal.V_poly.to_json()},
                   {"Omega", terminal.Omega.to_json()},
                   {"v_scale", terminal.v_scale},
                   {"margin_rpi", terminal.margin_rpi},
                   {"margin_state", terminal.margin_state},
                   {"margin_input", terminal.margin_input},
                   {"rpi_iterations", terminal.rpi_iterations}};
  j["coverage"] = {{"feasible", coverage.feasible},
                   {"h", vector_to_json(coverage.h.g)},
                   {"residual", coverage.residual},
                   {"max_abs_error", coverage.max_abs_error},
                   {"support", coverage.support}};
  j["tail_deviation"] = {{"ok", deviation.ok}, {"min_slack", deviation.min_slack}, {"failing", deviation.failing}};
  j["pe"] = {{"ok", pe.ok}, {"rank", pe.rank}, {"required", pe.required}};
  j["iss"] = {{"eps", iss.eps},
              {"beta_h", iss.beta_h},
              {"alpha", iss.alpha},
              {"c_delta", iss.c_delta},
              {"c_V", iss.c_V},
              {"d_bar_V", iss.d_bar_V},
              {"kappa", iss.kappa},
              {"q_lower", iss.q_lower},
              {"alpha_V_lower", iss.alpha_V_lower},
              {"alpha_V_upper", iss.alpha_V_upper},
              {"V_max", iss.V_max},
              {"c_hat", iss.c_hat},
              {"c_hat_tight", iss.c_hat_tight},
              {"lambda_max_PL", iss.lambda_max_PL}};
  j["assumptions"] = assumptions.to_json();
  return j;
}

DesignArtifacts DesignArtifacts::from_json(const nlohmann::json& j) {
  try {
    DesignArtifacts a;
    const auto& in = j.at("inputs");
    a.inputs.X = Polytope::from_json(in.at("X"));
    a.inputs.U = Polytope::from_json(in.at("U"));
    a.inputs.W = Polytope::from_json(in.at("W"));
    a.inputs.Q = matrix_from_json(in.at("Q"));
    a.inputs.R = matrix_from_json(in.at("R"));
    a.inputs.L = in.at("L").get<int>();
    a.inputs.theta = in.value("theta", 1.0);
    a.inputs.eps_outer = in.value("eps_outer", 1e-3);
    a.inputs.mu = in.value("mu", 0.1);
    a.traj.u = matrix_from_json(j.at("trajectory").at("u"));
    a.traj.x_hat = matrix_from_json(j.at("trajectory").at("x_hat"));
    a.traj.validate();
    a.hankel = build_hankel(a.traj, a.inputs.L + 1);
    const auto& gs = j.at("gamma_star");
    a.gamma.gamma = gs.at("gamma").get<double>();
    a.gamma.f_gamma = gs.value("f_gamma", 0.0);
    a.gamma.start = gs.value("start", 0.0);
    a.gamma.iterations = gs.value("iterations", 0);
    a.model_vertices = j.value("model_vertices", 0);
    const auto& g = j.at("gain");
    a.gain.K = matrix_from_json(g.at("K"));
    a.gain.P = mat_or_empty(g, "P");
    a.gain.Y = mat_or_empty(g, "Y");
    a.gain.beta = g.value("beta", 0.0);
    a.gain.fixed_gain = g.value("fixed_gain", false);
    a.gain.vertex_min_eig = g.value("vertex_min_eig", std::vector<double>{});
    a.family.K = a.gain.K;
    a.family.A_K.vertices = matrices_from_json(j.at("family").at("A_K"));
    a.family.B_set.vertices = matrices_from_json(j.at("family").at("B"));
    a.family.A_K.rows = a.family.A_K.cols = a.n();
    a.family.B_set.rows = a.n();
    a.family.B_set.cols = a.m();
    const auto& tw = j.at("terminal_weight");
    a.weight.P_L = matrix_from_json(tw.at("P_L"));
    a.weight.lambda = tw.value("lambda", 0.0);
    a.weight.c_p = tw.value("c_p", 0.0);
    a.weight.eta = tw.value("eta", 0.0);
    a.weight.mu = tw.value("mu", 0.1);
    const auto& t = j.at("tube");
    a.tube.theta = t.value("theta", 1.0);
    a.tube.gamma_star = t.value("gamma_star", a.gamma.gamma);
    a.tube.E = Polytope::from_json(t.at("E"));
    a.tube.E_w = Polytope::from_json(t.at("E_w"));
    a.tube.E_on = Polytope::from_json(t.at("E_on"));
    a.tube.E_off = Polytope::from_json(t.at("E_off"));
    a.tube.D = Polytope::from_json(t.at("D"));
    a.tube.Z = Polytope::from_json(t.at("Z"));
    a.tube.U_hat = Polytope::from_json(t.at("U_hat"));
    a.tube.rpi_margin = t.value("rpi_margin", 0.0);
    a.tube.rpi_iterations = t.value("rpi_iterations", 0);
    const auto& tf = j.at("terminal");
    a.terminal.Z_f = Polytope::from_json(tf.at("Z_f"));
    a.terminal.V_poly = Polytope::from_json(tf.at("V"));
    a.terminal.Omega = Polytope::from_json(tf.at("Omega"));
    a.terminal.v_scale = tf.value("v_scale", 1.0);
    a.terminal.margin_rpi = tf.value("margin_rpi", 0.0);
    a.terminal.margin_state = tf.value("margin_state", 0.0);
    a.terminal.margin_input = tf.value("margin_input", 0.0);
    a.terminal.rpi_iterations = tf.value("rpi_iterations", 0);
    const auto& c = j.at("coverage");
    a.coverage.feasible = c.value("feasible", false);
    a.coverage.h.g = vector_from_json(c.at("h"));
    a.coverage.h.theta = 1.0;
    a.coverage.residual = c.value("residual", 0.0);
    a.coverage.max_abs_error = c.value("max_abs_error", 0.0);
    a.coverage.support = c.value("support", 0);
    a.deviation = check_tail_deviation(a.hankel, a.gain.K, a.terminal.V_poly.scaled(1.0 / a.inputs.theta));
    a.pe = check_pe(a.traj.u, a.inputs.L + a.n() + 1);
    const auto& s = j.at("iss");
    a.iss.eps = s.value("eps", 0.0);
    a.iss.beta_h = s.value("beta_h", 0.0);
    a.iss.alpha = s.value("alpha", 0.0);
    a.iss.c_delta = s.value("c_delta", 0.0);
    a.iss.c_V = s.value("c_V", 0.0);
    a.iss.d_bar_V = s.value("d_bar_V", 0.0);
    a.iss.kappa = s.value("kappa", 0.0);
    a.iss.q_lower = s.value("q_lower", 0.0);
    a.iss.alpha_V_lower = s.value("alpha_V_lower", 0.0);
    a.iss.alpha_V_upper = s.value("alpha_V_upper", 0.0);
    a.iss.V_max = s.value("V_max", 0.0);
    a.iss.c_hat = s.value("c_hat", 0.0);
    a.iss.c_hat_tight = s.value("c_hat_tight", 0.0);
    a.iss.lambda_max_PL = s.value("lambda_max_PL", 0.0);
    a.assumptions = check_assumptions(a);
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed artifacts JSON: ") + e.what());
  }
}

}  // namespace trddpc
