#include "trddpc/simulation.hpp"

#include "trddpc/error.hpp"
#include "trddpc/json_util.hpp"
#include "trddpc/linalg.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

namespace trddpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Axis-aligned bounds when P is exactly a box; nullopt otherwise.
std::optional<std::pair<Vector, Vector>> as_box(const Polytope& P) {
  if (P.is_empty()) return std::nullopt;
  const int d = P.dim();
  const Matrix& V = P.vertices();
  const Vector lo = V.rowwise().minCoeff();
  const Vector hi = V.rowwise().maxCoeff();
  for (Eigen::Index i = 0; i < P.G().rows(); ++i) {
    int nnz = 0;
    for (int j = 0; j < d; ++j) nnz += std::abs(P.G()(i, j)) > 1e-12 ? 1 : 0;
    if (nnz != 1) return std::nullopt;
  }
  return std::make_pair(lo, hi);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Polytope set_from_json(const nlohmann::json& j, int dim_hint) {
  if (j.contains("dim")) return Polytope::from_json(j);
  if (j.contains("box")) {
    const auto& b = j["box"];
    Vector r;
    if (b.is_number()) {
      if (dim_hint < 1) throw Error(ErrorCode::kIo, "scalar box radius needs a known dimension");
      r = Vector::Constant(dim_hint, b.get<double>());
    } else {
      r = vector_from_json(b);
    }
    if (r.size() > 0 && r.maxCoeff() == 0.0 && r.minCoeff() == 0.0) return Polytope::zero(static_cast<int>(r.size()));
    return Polytope::symmetric_box(r);
  }
  if (j.contains("lo") && j.contains("hi")) return Polytope::box(vector_from_json(j["lo"]), vector_from_json(j["hi"]));
  if (j.contains("G") && j.contains("h")) return Polytope::from_halfspaces(matrix_from_json(j["G"]), vector_from_json(j["h"]));
  if (j.contains("points")) return Polytope::from_points(matrix_from_json(j["points"]).transpose());
  throw Error(ErrorCode::kIo, "unrecognized set description");
}

double inf_radius(const Polytope& P) {
  return P.is_empty() || P.vertices().size() == 0 ? 0.0 : P.vertices().cwiseAbs().maxCoeff();
}

std::string vec_str(const Vector& v) {
  std::ostringstream os;
  os << std::setprecision(17) << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
  os << "]";
  return os.str();
}

template <typename Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, std::max(count, 1));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

const char* to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::kUniform: return "uniform";
    case NoiseMode::kVertex: return "vertex";
    case NoiseMode::kWorstCase: return "worst-case";
  }
  return "unknown";
}

NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "uniform") return NoiseMode::kUniform;
  if (s == "vertex") return NoiseMode::kVertex;
  if (s == "worst-case") return NoiseMode::kWorstCase;
  throw Error(ErrorCode::kInvalidArgument, "unknown noise mode '" + s + "'");
}

NoiseSampler::NoiseSampler(const Polytope& W, NoiseMode mode, std::uint64_t seed)
    : W_(W), mode_(mode), rng_(seed) {
  if (W.is_empty()) throw Error(ErrorCode::kEmptySet, "noise set is empty");
  is_zero_ = W.vertices().cwiseAbs().maxCoeff() == 0.0;
  if (const auto box = as_box(W)) {
    is_box_ = true;
    lo_ = box->first;
    hi_ = box->second;
  } else if (mode == NoiseMode::kUniform && !is_zero_) {
    hit_and_run_ = true;
    walker_ = W.centroid();
  }
}

Vector NoiseSampler::sample(const Vector* direction) {
  const int d = W_.dim();
  if (is_zero_) return Vector::Zero(d);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (mode_) {
    case NoiseMode::kUniform: {
      if (is_box_) {
        Vector w(d);
        for (int i = 0; i < d; ++i) w(i) = lo_(i) + (hi_(i) - lo_(i)) * unit(rng_);
        return w;
      }
      // Hit-and-run: random direction, uniform point on the chord.
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (int sweep = 0; sweep < 10; ++sweep) {
        Vector dir(d);
        for (int i = 0; i < d; ++i) dir(i) = gauss(rng_);
        dir.normalize();
        double t_lo = -kInf, t_hi = kInf;
        const Vector Gd = W_.G() * dir;
        const Vector slack = W_.h() - W_.G() * walker_;
        for (Eigen::Index r = 0; r < Gd.size(); ++r) {
          if (Gd(r) > 1e-14) t_hi = std::min(t_hi, slack(r) / Gd(r));
          if (Gd(r) < -1e-14) t_lo = std::max(t_lo, slack(r) / Gd(r));
        }
        if (!std::isfinite(t_lo) || !std::isfinite(t_hi) || t_hi < t_lo) continue;
        walker_ += (t_lo + (t_hi - t_lo) * unit(rng_)) * dir;
      }
      return walker_;
    }
    case NoiseMode::kVertex: {
      std::uniform_int_distribution<int> pick(0, W_.num_vertices() - 1);
      return W_.vertices().col(pick(rng_));
    }
    case NoiseMode::kWorstCase: {
      std::uniform_int_distribution<int> pick(0, W_.num_vertices() - 1);
      const int random_vertex = pick(rng_);  // drawn every step to keep streams aligned
      if (direction == nullptr || direction->size() != d || direction->norm() == 0.0) {
        return W_.vertices().col(random_vertex);
      }
      return W_.support_point(*direction);
    }
  }
  return Vector::Zero(d);
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

Polytope Scenario::noise_set() const {
  if (noise_scale == 1.0) return W;
  return W.scaled(noise_scale);
}

void Scenario::validate() const {
  const int nn = n(), mm = m();
  if (nn < 1 || mm < 1 || A.cols() != nn || B.rows() != nn) {
    throw Error(ErrorCode::kDimensionMismatch, "scenario: A must be n x n and B n x m");
  }
  if (X.dim() != nn || W.dim() != nn || U.dim() != mm || Q.rows() != nn || Q.cols() != nn || R.rows() != mm ||
      R.cols() != mm || x0.size() != nn) {
    throw Error(ErrorCode::kDimensionMismatch, "scenario: set, weight or x0 dimensions disagree with (A, B)");
  }
  if (data_x0.size() != nn) throw Error(ErrorCode::kDimensionMismatch, "scenario: data_x0 dimension");
  Matrix C(nn, nn * mm);
  Matrix Ak = Matrix::Identity(nn, nn);
  for (int k = 0; k < nn; ++k) {
    C.middleCols(k * mm, mm) = Ak * B;
    Ak = A * Ak;
  }
  if (Eigen::FullPivLU<Matrix>(C).rank() < nn) throw Error(ErrorCode::kInvalidArgument, "scenario: (A, B) not controllable");
  if (X.is_empty() || U.is_empty() || W.is_empty()) throw Error(ErrorCode::kEmptySet, "scenario: empty constraint set");
  if (X.point_margin(x0) < -1e-12) throw Error(ErrorCode::kInvalidArgument, "scenario: x0 is outside X");
  if (min_eig(Q) <= 0 || min_eig(R) <= 0) throw Error(ErrorCode::kInvalidArgument, "scenario: Q and R must be positive definite");
  if (L < 1 || steps < 1) throw Error(ErrorCode::kInvalidArgument, "scenario: L and steps must be positive");
  if (data.T_loc < L || data.T_pre2 < L) throw Error(ErrorCode::kInvalidArgument, "scenario: T_loc and T_pre2 must be at least L");
  if (T != 2 * L + data.T_loc + data.T_pre2) {
    throw Error(ErrorCode::kInvalidArgument,
                "scenario: T must equal 2 L + T_loc + T_pre2 (" + std::to_string(2 * L + data.T_loc + data.T_pre2) + ")");
  }
  if (data.prefix_mode != "uniform" && data.prefix_mode != "feedback") {
    throw Error(ErrorCode::kInvalidArgument, "scenario: prefix_mode must be 'uniform' or 'feedback'");
  }
  if (theta <= 0 || noise_scale < 0) throw Error(ErrorCode::kInvalidArgument, "scenario: theta > 0 and noise_scale >= 0 required");
}

DesignInputs Scenario::design_inputs() const {
  DesignInputs in;
  in.X = X;
  in.U = U;
  in.W = noise_set();
  in.Q = Q;
  in.R = R;
  in.L = L;
  in.theta = theta;
  in.eps_outer = eps_outer;
  in.mu = mu;
  return in;
}

nlohmann::json Scenario::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["A"] = matrix_to_json(A);
  j["B"] = matrix_to_json(B);
  j["X"] = X.to_json();
  j["U"] = U.to_json();
  j["W"] = W.to_json();
  j["Q"] = matrix_to_json(Q);
  j["R"] = matrix_to_json(R);
  j["L"] = L;
  j["T"] = T;
  j["x0"] = vector_to_json(x0);
  j["data_x0"] = vector_to_json(data_x0);
  j["steps"] = steps;
  j["seeds"] = seeds;
  j["design_seed"] = design_seed;
  j["theta"] = theta;
  j["eps_outer"] = eps_outer;
  j["mu"] = mu;
  j["noise_scale"] = noise_scale;
  j["noise_mode"] = to_string(noise_mode);
  j["baseline"] = baseline;
  j["data"] = {{"T_loc", data.T_loc},
               {"T_pre2", data.T_pre2},
               {"prefix_amplitude", data.prefix_amplitude},
               {"prefix_mode", data.prefix_mode},
               {"pilot_length", data.pilot_length},
               {"pilot_amplitude", data.pilot_amplitude},
               {"v_fraction", data.v_fraction},
               {"retry_cap", data.retry_cap}};
  j["search"] = {{"max_scale", search.max_scale},
                 {"rel_width", search.rel_width},
                 {"seeds", search.seeds},
                 {"threads", search.threads}};
  j["solver"] = {{"tol", solver.tol}, {"max_iter", solver.max_iter}};
  return j;
}

Scenario Scenario::from_json(const nlohmann::json& j) {
  try {
    Scenario s;
    s.name = j.value("name", std::string("scenario"));
    s.A = matrix_from_json(j.at("A"));
    s.B = matrix_from_json(j.at("B"));
    const int n = static_cast<int>(s.A.rows());
    const int m = static_cast<int>(s.B.cols());
    s.X = set_from_json(j.at("X"), n);
    s.U = set_from_json(j.at("U"), m);
    s.W = set_from_json(j.at("W"), n);
    s.Q = matrix_from_json(j.at("Q"));
    s.R = matrix_from_json(j.at("R"));
    s.L = j.at("L").get<int>();
    s.T = j.at("T").get<int>();
    s.x0 = vector_from_json(j.at("x0"));
    s.data_x0 = j.contains("data_x0") ? vector_from_json(j["data_x0"]) : Vector::Zero(n);
    s.steps = j.at("steps").get<int>();
    if (j.contains("seeds")) {
      const auto& sj = j["seeds"];
      if (sj.is_array()) {
        s.seeds = sj.get<std::vector<std::uint64_t>>();
      } else {
        const std::uint64_t first = sj.value("first", std::uint64_t{1});
        const int count = sj.at("count").get<int>();
        for (int i = 0; i < count; ++i) s.seeds.push_back(first + static_cast<std::uint64_t>(i));
      }
    }
    if (s.seeds.empty()) s.seeds.push_back(1);
    s.design_seed = j.value("design_seed", std::uint64_t{1});
    s.theta = j.value("theta", 1.0);
    s.eps_outer = j.value("eps_outer", 1e-3);
    s.mu = j.value("mu", 0.1);
    s.noise_scale = j.value("noise_scale", 1.0);
    s.noise_mode = noise_mode_from_string(j.value("noise_mode", std::string("uniform")));
    s.baseline = j.value("baseline", true);
    if (j.contains("data")) {
      const auto& d = j["data"];
      s.data.T_loc = d.value("T_loc", 0);
      s.data.T_pre2 = d.value("T_pre2", 0);
      s.data.prefix_amplitude = d.value("prefix_amplitude", 1.0);
      s.data.prefix_mode = d.value("prefix_mode", std::string("uniform"));
      s.data.pilot_length = d.value("pilot_length", 40);
      s.data.pilot_amplitude = d.value("pilot_amplitude", 1.0);
      s.data.v_fraction = d.value("v_fraction", 0.9);
      s.data.retry_cap = d.value("retry_cap", 20);
    }
    if (j.contains("search")) {
      const auto& d = j["search"];
      s.search.max_scale = d.value("max_scale", 100.0);
      s.search.rel_width = d.value("rel_width", 0.01);
      s.search.seeds = d.value("seeds", 20);
      s.search.threads = d.value("threads", 0);
    }
    if (j.contains("solver")) {
      s.solver.tol = j["solver"].value("tol", 1e-8);
      s.solver.max_iter = j["solver"].value("max_iter", 100);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("malformed scenario: ") + e.what());
  }
}

Scenario Scenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open scenario file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, "cannot parse " + path + ": " + e.what());
  }
  return from_json(j);
}

PlantOracle make_plant_oracle(const Scenario& s, std::uint64_t seed) {
  struct State {
    Vector x;
    NoiseSampler noise;
  };
  auto st = std::make_shared<State>(State{s.data_x0, NoiseSampler(s.noise_set(), NoiseMode::kUniform, seed)});
  const Matrix A = s.A, B = s.B;
  const Vector x_start = s.data_x0;
  PlantOracle p;
  p.reset = [st, x_start] { st->x = x_start; };
  p.measure = [st] { return Vector(st->x + st->noise.sample()); };
  p.apply = [st, A, B](const Vector& u) { st->x = A * st->x + B * u; };
  return p;
}

// ---------------------------------------------------------------------------
// Offline pipeline
// ---------------------------------------------------------------------------

PipelineResult design_pipeline(const Scenario& s, const PipelineOptions& opts) {
  s.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int n = s.n(), m = s.m();
  const DesignInputs in = s.design_inputs();
  PlantOracle plant = make_plant_oracle(s, mix_seed(s.design_seed, 1));
  std::mt19937_64 rng(mix_seed(s.design_seed, 2));

  // Open-loop pilot experiment.
  Trajectory pilot;
  pilot.u.resize(m, s.data.pilot_length);
  pilot.x_hat.resize(n, s.data.pilot_length);
  {
    std::uniform_real_distribution<double> amp(-s.data.pilot_amplitude, s.data.pilot_amplitude);
    plant.reset();
    for (int t = 0; t < s.data.pilot_length; ++t) {
      pilot.x_hat.col(t) = plant.measure();
      for (int i = 0; i < m; ++i) pilot.u(i, t) = amp(rng);
      plant.apply(pilot.u.col(t));
    }
  }
  const Polytope V_shape = intersect(s.U, s.U.scaled(-1.0));
  DesignOptions pilot_opts;
  pilot_opts.V_shape = V_shape;
  pilot_opts.shrink_V = true;
  pilot_opts.strict_terminal = opts.strict_terminal;
  const DesignArtifacts pa = design_from_data(pilot, in, pilot_opts);

  PipelineResult res;
  res.pilot_K = pa.K();
  res.pilot_v_scale = pa.terminal.certified() ? pa.terminal.v_scale : 0.0;
  if (res.pilot_v_scale > 0.0) {
    res.V = V_shape.scaled(s.data.v_fraction * res.pilot_v_scale);
  } else if (!opts.strict_terminal) {
    res.V = intersect(pa.tube.U_hat, pa.tube.U_hat.scaled(-1.0)).scaled(0.5);
    if (res.V.is_empty()) res.V = Polytope::zero(m);
  } else {
    throw Error(ErrorCode::kTerminalDesignInfeasible, "pilot design admits no terminal excitation set");
  }

  CollectOptions co;
  co.L = s.L;
  co.T_loc = s.data.T_loc;
  co.T_pre2 = s.data.T_pre2;
  co.prefix_amplitude = s.data.prefix_amplitude;
  co.retry_cap = s.data.retry_cap;
  if (s.data.prefix_mode == "feedback") {
    const Matrix K = res.pilot_K;
    const Vector lo = s.U.vertices().rowwise().minCoeff();
    const Vector hi = s.U.vertices().rowwise().maxCoeff();
    const double a = s.data.prefix_amplitude;
    co.prefix_policy = [K, lo, hi, a](const Vector& x_hat, std::mt19937_64& g) {
      std::uniform_real_distribution<double> e(-a, a);
      Vector u = K * x_hat;
      for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = std::clamp(u(i) + e(g), lo(i), hi(i));
      return u;
    };
  }
  res.data = collect_data(plant, res.pilot_K, res.V, co, rng);

  DesignOptions final_opts;
  final_opts.K = res.pilot_K;
  final_opts.V_shape = res.V;
  final_opts.shrink_V = false;
  final_opts.strict_terminal = opts.strict_terminal;
  res.artifacts = design_from_data(res.data.traj, in, final_opts);
  res.seconds = elapsed_since(t0);
  return res;
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

double SimulationRecord::mean_solve_seconds() const {
  if (steps.empty()) return 0.0;
  double t = 0.0;
  for (const auto& s : steps) t += s.solve_seconds;
  return t / static_cast<double>(steps.size());
}

nlohmann::json SimulationRecord::summary_json() const {
  return {{"controller", controller},
          {"seed", seed},
          {"steps", steps.size()},
          {"total_cost", total_cost},
          {"input_violations", input_violations},
          {"state_violations", state_violations},
          {"step_infeasible", step_infeasible},
          {"infeasible_step", infeasible_step},
          {"failure", failure},
          {"x_final", vector_to_json(x_final)},
          {"mean_solve_seconds", mean_solve_seconds()}};
}

namespace {

// Shared loop body for both controllers: `solve` returns false when the
// step is infeasible and otherwise fills the plan, objective and input.
struct StepOutcome {
  bool feasible = false;
  Vector u;
  Matrix Z;
  Matrix V;
  double objective = 0.0;
  GroupMargins margins;
  double seconds = 0.0;
  int iterations = 0;
};

template <typename SolveFn, typename CandidateFn>
SimulationRecord closed_loop(const Scenario& s, std::uint64_t seed, const RunOptions& opts, const char* name,
                             SolveFn&& solve, CandidateFn&& candidate) {
  SimulationRecord rec;
  rec.controller = name;
  rec.seed = seed;
  const int steps = opts.steps.value_or(s.steps);
  NoiseSampler noise(s.noise_set(), opts.mode.value_or(s.noise_mode), seed);
  Vector x = s.x0;
  for (int k = 0; k < steps; ++k) {
    const Vector w = noise.sample(&x);
    const Vector x_hat = x + w;
    StepRecord st;
    st.k = k;
    st.x = x;
    st.w = w;
    st.x_hat = x_hat;
    if (k > 0) candidate(x_hat, st);
    const StepOutcome out = solve(x_hat, k);
    if (!out.feasible) {
      rec.step_infeasible = true;
      rec.infeasible_step = k;
      std::ostringstream os;
      os << "step " << k << " infeasible: x = " << vec_str(x) << ", w = " << vec_str(w) << ", x_hat = "
         << vec_str(x_hat) << ", seed = " << seed;
      rec.failure = os.str();
      break;
    }
    st.u = out.u;
    st.Z = out.Z;
    st.V = out.V;
    st.objective = out.objective;
    st.margins = out.margins;
    st.solve_seconds = out.seconds;
    st.iterations = out.iterations;
    st.stage_cost = x.dot(s.Q * x) + out.u.dot(s.R * out.u);
    st.input_slack = s.U.point_margin(out.u);
    const Vector x_next = s.A * x + s.B * out.u;
    st.state_slack = s.X.point_margin(x_next);
    if (st.input_slack < -1e-9) ++rec.input_violations;
    if (st.state_slack < -1e-9) ++rec.state_violations;
    rec.total_cost += st.stage_cost;
    rec.steps.push_back(std::move(st));
    x = x_next;
  }
  rec.x_final = x;
  return rec;
}

// Rollout of the first plan on the true plant with fresh measurement noise.
void first_plan_rollout(const Scenario& s, const Matrix& K, const StepRecord& first, std::uint64_t seed,
                        SimulationRecord& rec) {
  const int L = static_cast<int>(first.V.cols());
  NoiseSampler noise(s.noise_set(), NoiseMode::kUniform, mix_seed(seed, 3));
  rec.rollout_plan = first.Z;
  rec.rollout_x_hat.resize(s.n(), L + 1);
  Vector x = first.x;
  for (int l = 0; l <= L; ++l) {
    const Vector x_hat = l == 0 ? first.x_hat : Vector(x + noise.sample());
    rec.rollout_x_hat.col(l) = x_hat;
    if (l < L) x = s.A * x + s.B * (first.V.col(l) + K * x_hat);
  }
}

}  // namespace

SimulationRecord run_closed_loop(const Scenario& s, const DesignArtifacts& art, std::uint64_t seed,
                                 const RunOptions& opts) {
  Controller ctl(art, opts.controller);
  OcpSolution prev;
  bool have_prev = false;
  auto solve = [&](const Vector& x_hat, int) {
    StepOutcome out;
    OcpSolution sol = ctl.solve(x_hat, have_prev ? &prev.g : nullptr);
    out.feasible = sol.feasible;
    out.seconds = sol.solve_seconds;
    out.iterations = sol.iterations;
    if (!sol.feasible) return out;
    out.u = control_input(art, sol, x_hat);
    out.Z = sol.Z;
    out.V = sol.V;
    out.objective = sol.objective;
    out.margins = sol.margins;
    prev = std::move(sol);
    have_prev = true;
    return out;
  };
  auto candidate = [&](const Vector& x_hat, StepRecord& st) {
    if (!have_prev) return;
    const ShiftReport rep = shift_candidate(art, prev, x_hat);
    st.has_candidate = true;
    st.cand_stage = rep.stage;
    st.cand_initial = rep.initial;
    st.cand_terminal = rep.terminal;
    st.cand_realizable = rep.realizable;
    st.cand_cost = rep.cost;
  };
  SimulationRecord rec = closed_loop(s, seed, opts, "trddpc", solve, candidate);
  if (!rec.steps.empty()) first_plan_rollout(s, art.K(), rec.steps.front(), seed, rec);
  return rec;
}

std::vector<SimulationRecord> run_batch(const Scenario& s, const DesignArtifacts& art,
                                        const std::vector<std::uint64_t>& seeds, const RunOptions& opts,
                                        int threads) {
  std::vector<SimulationRecord> out(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), threads,
               [&](int i) { out[static_cast<std::size_t>(i)] = run_closed_loop(s, art, seeds[static_cast<std::size_t>(i)], opts); });
  return out;
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

nlohmann::json AuditReport::to_json() const {
  return {{"constraints", constraints},
          {"worst_input_slack", worst_input_slack},
          {"worst_state_slack", worst_state_slack},
          {"anchoring", anchoring},
          {"worst_anchor", worst_anchor},
          {"recursive_feasibility", recursive_feasibility},
          {"shift_items", shift_items},
          {"iss_decrease", iss_decrease},
          {"worst_iss_residual", worst_iss_residual},
          {"sandwich", sandwich},
          {"worst_sandwich", worst_sandwich},
          {"first_failure_step", first_failure_step},
          {"located", located},
          {"all", all()}};
}

AuditReport audit_theorems(const SimulationRecord& rec, const DesignArtifacts& art, double tol) {
  AuditReport a;
  a.worst_input_slack = kInf;
  a.worst_state_slack = kInf;
  a.worst_anchor = kInf;
  a.worst_iss_residual = -kInf;
  a.worst_sandwich = -kInf;
  auto fail = [&](int k, const std::string& what) {
    if (a.first_failure_step < 0 || k < a.first_failure_step) {
      a.first_failure_step = k;
      a.located = "step " + std::to_string(k) + ": " + what;
    }
  };
  const IssCertificate& iss = art.iss;
  const double offset = iss.beta_h * iss.beta_h * iss.eps * iss.eps;
  const double alpha_lo = 0.5 * iss.alpha_V_lower;
  const double alpha_hi = 2.0 * iss.alpha_V_upper;
  for (std::size_t i = 0; i < rec.steps.size(); ++i) {
    const StepRecord& st = rec.steps[i];
    const int k = st.k;
    // Slacks are recomputed from the recorded trajectory, not taken from the
    // per-step bookkeeping.
    const double in_slack = art.inputs.U.point_margin(st.u);
    double st_slack = art.inputs.X.point_margin(st.x);
    if (i + 1 == rec.steps.size() && rec.x_final.size() == st.x.size()) {
      st_slack = std::min(st_slack, art.inputs.X.point_margin(rec.x_final));
    }
    a.worst_input_slack = std::min(a.worst_input_slack, in_slack);
    a.worst_state_slack = std::min(a.worst_state_slack, st_slack);
    if (in_slack < -tol) {
      a.constraints = false;
      fail(k, "input outside U (slack " + std::to_string(in_slack) + ")");
    }
    if (st_slack < -tol) {
      a.constraints = false;
      fail(k, "state outside X (slack " + std::to_string(st_slack) + ")");
    }
    const double anchor = art.tube.E.point_margin(st.Z.col(0) - st.x_hat);
    a.worst_anchor = std::min(a.worst_anchor, anchor);
    if (anchor < -tol) {
      a.anchoring = false;
      fail(k, "anchoring error outside E");
    }
    if (st.has_candidate && !(st.cand_stage && st.cand_initial && st.cand_terminal && st.cand_realizable)) {
      a.shift_items = false;
      fail(k, "shift candidate fails a feasibility item");
    }
    const double nx = st.x_hat.squaredNorm();
    const double vmin = alpha_lo * nx - iss.alpha_V_lower * offset;
    const double vmax = alpha_hi * (nx + offset);
    const double sw = std::max(vmin - st.objective, st.objective - vmax);
    a.worst_sandwich = std::max(a.worst_sandwich, sw);
    if (sw > tol * std::max(1.0, std::abs(st.objective))) {
      a.sandwich = false;
      fail(k, "value outside its quadratic bounds");
    }
    if (i + 1 < rec.steps.size()) {
      const double r = rec.steps[i + 1].objective - st.objective + iss.kappa * nx - iss.c_hat;
      a.worst_iss_residual = std::max(a.worst_iss_residual, r);
      if (r > tol * std::max(1.0, std::abs(st.objective))) {
        a.iss_decrease = false;
        fail(k, "value decrease bound violated (residual " + std::to_string(r) + ")");
      }
    }
  }
  // Plan-conditioned rollout errors stay in E.
  for (Eigen::Index l = 0; l < rec.rollout_x_hat.cols(); ++l) {
    const double mg = art.tube.E.point_margin(rec.rollout_plan.col(l) - rec.rollout_x_hat.col(l));
    a.worst_anchor = std::min(a.worst_anchor, mg);
    if (mg < -tol) {
      a.anchoring = false;
      fail(0, "first-plan rollout error outside E at l = " + std::to_string(l));
    }
  }
  if (rec.step_infeasible && rec.infeasible_step > 0) {
    a.recursive_feasibility = false;
    fail(rec.infeasible_step, "infeasible after a feasible start");
  }
  if (rec.step_infeasible && rec.infeasible_step == 0) {
    a.recursive_feasibility = false;
    fail(0, "initial measurement outside the feasible region");
  }
  if (rec.steps.empty()) {
    a.worst_input_slack = a.worst_state_slack = a.worst_anchor = 0.0;
  }
  if (!std::isfinite(a.worst_iss_residual)) a.worst_iss_residual = 0.0;
  if (!std::isfinite(a.worst_sandwich)) a.worst_sandwich = 0.0;
  return a;
}

// ---------------------------------------------------------------------------
// Noise-limit search
// ---------------------------------------------------------------------------

bool noise_scale_admissible(const Scenario& s, double scale, const SearchOptions& opts, std::string* why) {
  auto reject = [&](const std::string& msg) {
    if (why != nullptr) *why = msg;
    return false;
  };
  Scenario sc = s;
  sc.noise_scale = s.noise_scale * scale;
  try {
    PipelineOptions po;
    po.strict_terminal = false;
    const PipelineResult pr = design_pipeline(sc, po);
    const AssumptionReport& ar = pr.artifacts.assumptions;
    if (!ar.tightened_nonempty) return reject("tightened sets empty");
    if (!ar.tube_rpi) return reject("tube not RPI");
    if (!ar.tail_coverage) return reject("tail coverage fails");
    if (!ar.tail_deviation) return reject("tail deviation outside V");
    if (!ar.gain) return reject("gain not certified");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < opts.seeds; ++i) seeds.push_back(static_cast<std::uint64_t>(i + 1));
    RunOptions ro;
    ro.controller.qp = s.solver;
    const auto recs = run_batch(sc, pr.artifacts, seeds, ro, opts.threads);
    for (const auto& r : recs) {
      if (r.step_infeasible) return reject("closed loop infeasible (seed " + std::to_string(r.seed) + ")");
      if (r.input_violations + r.state_violations > 0) {
        return reject("constraint violation (seed " + std::to_string(r.seed) + ")");
      }
    }
  } catch (const Error& e) {
    return reject(std::string(to_string(e.code())) + ": " + e.what());
  }
  if (why != nullptr) why->clear();
  return true;
}

SearchResult search_max_noise(const Scenario& s, const SearchOptions& opts) {
  SearchResult res;
  const double unit = inf_radius(s.noise_set());
  auto test = [&](double scale) {
    std::string why;
    const bool ok = noise_scale_admissible(s, scale, opts, &why);
    res.history.emplace_back(scale, ok);
    if (!ok) res.last_failure = why;
    return ok;
  };
  if (!test(1.0)) {
    res.scale = 0.0;
    return res;
  }
  double lo = 1.0, hi = 0.0;
  for (double c = 2.0;; c *= 2.0) {
    c = std::min(c, opts.max_scale);
    if (!test(c)) {
      hi = c;
      break;
    }
    lo = c;
    if (c >= opts.max_scale) {
      res.scale = lo;
      res.noise_level = lo * unit;
      return res;
    }
  }
  while (hi - lo > opts.rel_width * lo) {
    const double mid = 0.5 * (lo + hi);
    if (test(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  res.scale = lo;
  res.noise_level = lo * unit;
  return res;
}

// ---------------------------------------------------------------------------
// Model-based baseline
// ---------------------------------------------------------------------------

BaselineDesign design_baseline(const Scenario& s, const Matrix& K, const Matrix& P_L) {
  const int n = s.n();
  BaselineDesign bd;
  bd.K = K;
  bd.P_L = P_L;
  bd.A_K = s.A + s.B * K;
  const Polytope W = s.noise_set();
  const bool zero_noise = W.vertices().cwiseAbs().maxCoeff() == 0.0;
  bd.gamma_tilde = zero_noise ? 0.0 : gauge_norm(s.A, W);
  if (zero_noise) {
    bd.E = Polytope::zero(n);
  } else {
    const Polytope dist = minkowski_sum(W.scaled(bd.gamma_tilde), W);
    bd.E = rpi_synthesis({bd.A_K}, dist, s.eps_outer).set;
  }
  bd.Z = zero_noise ? s.X
                    : pontryagin_diff(pontryagin_diff(s.X, linear_image(bd.A_K, bd.E)), W.scaled(bd.gamma_tilde));
  bd.U_hat = zero_noise ? s.U : pontryagin_diff(s.U, linear_image(K, bd.E));
  if (bd.Z.is_empty()) throw Error(ErrorCode::kTightenedSetEmpty, "baseline: tightened state set is empty");
  if (bd.U_hat.is_empty()) throw Error(ErrorCode::kTightenedSetEmpty, "baseline: tightened input set is empty");

  // Maximal output-admissible set of z+ = A_K z under z in Z, K z in U_hat.
  const Matrix Gc = (Matrix(bd.Z.G().rows() + bd.U_hat.G().rows(), n) << bd.Z.G(), bd.U_hat.G() * K).finished();
  const Vector hc = (Vector(bd.Z.h().size() + bd.U_hat.h().size()) << bd.Z.h(), bd.U_hat.h()).finished();
  Matrix G = Gc;
  Vector h = hc;
  Matrix Ak = bd.A_K;
  for (int it = 1; it <= 500; ++it) {
    const Polytope O = Polytope::from_halfspaces(G, h);
    if (O.is_empty()) throw Error(ErrorCode::kTerminalDesignInfeasible, "baseline terminal set is empty");
    const Matrix Gn = Gc * Ak;
    bool redundant = true;
    for (Eigen::Index r = 0; r < Gn.rows() && redundant; ++r) {
      redundant = O.support_vertices(Gn.row(r).transpose()) <= hc(r) + 1e-10;
    }
    if (redundant) {
      bd.Z_f = O;
      bd.moas_iterations = it;
      return bd;
    }
    G = (Matrix(G.rows() + Gn.rows(), n) << G, Gn).finished();
    h = (Vector(h.size() + hc.size()) << h, hc).finished();
    Ak = bd.A_K * Ak;
  }
  throw Error(ErrorCode::kNoTermination, "baseline terminal set did not terminate");
}

namespace {

class BaselineController {
 public:
  BaselineController(const Scenario& s, const BaselineDesign& bd, QpOptions qo) : s_(s), bd_(bd), qo_(qo) {
    const int n = s.n(), m = s.m(), L = s.L;
    nv_ = n * (L + 1) + m * L;
    vo_ = n * (L + 1);
    const Matrix& K = bd.K;
    const Matrix KtR = K.transpose() * s.R;
    Matrix P = Matrix::Zero(nv_, nv_);
    qp_.q = Vector::Zero(nv_);
    for (int l = 0; l < L; ++l) {
      const int zi = l * n, vi = vo_ + l * m;
      P.block(zi, zi, n, n) += 2.0 * (s.Q + KtR * K);
      P.block(zi, vi, n, m) += 2.0 * KtR;
      P.block(vi, zi, m, n) += 2.0 * KtR.transpose();
      P.block(vi, vi, m, m) += 2.0 * s.R;
    }
    P.block(L * n, L * n, n, n) += 2.0 * bd.P_L;
    std::vector<Matrix> eqA;
    std::vector<Vector> eqb;
    std::vector<Matrix> inG;
    std::vector<Vector> inh;
    for (int l = 0; l < L; ++l) {
      Matrix A = Matrix::Zero(n, nv_);
      A.block(0, (l + 1) * n, n, n) = Matrix::Identity(n, n);
      A.block(0, l * n, n, n) = -bd.A_K;
      A.block(0, vo_ + l * m, n, m) = -s.B;
      eqA.push_back(A);
      eqb.push_back(Vector::Zero(n));
    }
    auto sel_z = [&](int l) {
      Matrix S = Matrix::Zero(n, nv_);
      S.block(0, l * n, n, n) = Matrix::Identity(n, n);
      return S;
    };
    auto add = [&](const Polytope& P, const Matrix& S) {
      const SplitRows sr = split_rows(P);
      if (sr.G_in.rows() > 0) {
        inG.push_back(sr.G_in * S);
        inh.push_back(sr.h_in);
      }
      if (sr.G_eq.rows() > 0) {
        eqA.push_back(sr.G_eq * S);
        eqb.push_back(sr.h_eq);
      }
    };
    // Anchoring first so its offsets are easy to update.
    const SplitRows se = split_rows(bd.E);
    GE_ = se.G_in;
    hE_ = se.h_in;
    GEq_ = se.G_eq;
    hEq_ = se.h_eq;
    if (GE_.rows() > 0) {
      inG.push_back(GE_ * sel_z(0));
      inh.push_back(hE_);
    }
    for (int l = 1; l <= L; ++l) add(bd.Z, sel_z(l));
    for (int l = 0; l < L; ++l) {
      Matrix S = Matrix::Zero(m, nv_);
      S.block(0, vo_ + l * m, m, m) = Matrix::Identity(m, m);
      S.block(0, l * n, m, n) = K;
      add(bd.U_hat, S);
    }
    add(bd.Z_f, sel_z(L));
    eq_anchor_row_ = 0;
    for (const auto& a : eqA) eq_anchor_row_ += static_cast<int>(a.rows());
    if (GEq_.rows() > 0) {
      eqA.push_back(GEq_ * sel_z(0));
      eqb.push_back(hEq_);
    }
    qp_.P = P.sparseView();
    Matrix Ad, Gd;
    stack(eqA, eqb, Ad, qp_.b);
    stack(inG, inh, Gd, qp_.h);
    qp_.A = Ad.sparseView();
    qp_.G = Gd.sparseView();
  }

  StepOutcome solve(const Vector& x_hat) {
    const auto t0 = std::chrono::steady_clock::now();
    const int n = s_.n(), m = s_.m(), L = s_.L;
    if (hE_.size() > 0) qp_.h.head(hE_.size()) = hE_ + GE_ * x_hat;
    if (hEq_.size() > 0) qp_.b.segment(eq_anchor_row_, hEq_.size()) = hEq_ + GEq_ * x_hat;
    const QpResult r = solve_qp(qp_, qo_);
    StepOutcome out;
    out.iterations = r.iterations;
    out.seconds = elapsed_since(t0);
    if (r.status == QpStatus::kInfeasible) return out;
    if (r.status != QpStatus::kOptimal &&
        !(r.primal_residual <= 1e-6 && r.dual_residual <= 1e-6 && r.mu <= 1e-6)) {
      throw Error(ErrorCode::kSolverFailure, std::string("baseline solver stopped with status ") + to_string(r.status));
    }
    out.feasible = true;
    out.Z = Eigen::Map<const Matrix>(r.x.data(), n, L + 1);
    out.V = Eigen::Map<const Matrix>(r.x.data() + vo_, m, L);
    out.u = out.V.col(0) + bd_.K * x_hat;
    double J = 0.0;
    for (int l = 0; l < L; ++l) {
      const Vector z = out.Z.col(l);
      const Vector u = out.V.col(l) + bd_.K * z;
      J += z.dot(s_.Q * z) + u.dot(s_.R * u);
    }
    J += out.Z.col(L).dot(bd_.P_L * out.Z.col(L));
    out.objective = J;
    out.margins.anchor = bd_.E.point_margin(out.Z.col(0) - x_hat);
    out.margins.state = kInf;
    out.margins.input = kInf;
    for (int l = 1; l <= L; ++l) out.margins.state = std::min(out.margins.state, bd_.Z.point_margin(out.Z.col(l)));
    for (int l = 0; l < L; ++l) {
      out.margins.input = std::min(out.margins.input, bd_.U_hat.point_margin(out.V.col(l) + bd_.K * out.Z.col(l)));
    }
    out.margins.terminal = bd_.Z_f.point_margin(out.Z.col(L));
    out.margins.simplex = kInf;
    return out;
  }

 private:
  static void stack(const std::vector<Matrix>& Gs, const std::vector<Vector>& hs, Matrix& G, Vector& h) {
    Eigen::Index rows = 0, cols = 0;
    for (const auto& g : Gs) {
      rows += g.rows();
      cols = g.cols();
    }
    G.resize(rows, cols);
    h.resize(rows);
    Eigen::Index r = 0;
    for (std::size_t k = 0; k < Gs.size(); ++k) {
      G.middleRows(r, Gs[k].rows()) = Gs[k];
      h.segment(r, hs[k].size()) = hs[k];
      r += Gs[k].rows();
    }
  }

  const Scenario& s_;
  const BaselineDesign& bd_;
  QpOptions qo_;
  QpProblem qp_;
  int nv_ = 0;
  int vo_ = 0;
  Matrix GE_, GEq_;
  Vector hE_, hEq_;
  int eq_anchor_row_ = 0;
};

}  // namespace

SimulationRecord baseline_tube_mpc(const Scenario& s, const BaselineDesign& bd, std::uint64_t seed,
                                   const RunOptions& opts) {
  BaselineController ctl(s, bd, opts.controller.qp);
  auto solve = [&](const Vector& x_hat, int) { return ctl.solve(x_hat); };
  auto candidate = [](const Vector&, StepRecord&) {};
  return closed_loop(s, seed, opts, "baseline", solve, candidate);
}

std::vector<SimulationRecord> run_baseline_batch(const Scenario& s, const BaselineDesign& bd,
                                                 const std::vector<std::uint64_t>& seeds, const RunOptions& opts,
                                                 int threads) {
  std::vector<SimulationRecord> out(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), threads, [&](int i) {
    out[static_cast<std::size_t>(i)] = baseline_tube_mpc(s, bd, seeds[static_cast<std::size_t>(i)], opts);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

void write_record_csv(const std::string& path, const SimulationRecord& rec) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  os << std::setprecision(17);
  const int n = rec.steps.empty() ? 0 : static_cast<int>(rec.steps.front().x.size());
  const int m = rec.steps.empty() ? 0 : static_cast<int>(rec.steps.front().u.size());
  os << "k";
  for (int i = 0; i < n; ++i) os << ",x_" << i + 1;
  for (int i = 0; i < n; ++i) os << ",w_" << i + 1;
  for (int i = 0; i < n; ++i) os << ",xhat_" << i + 1;
  for (int i = 0; i < m; ++i) os << ",u_" << i + 1;
  os << ",stage_cost,objective,margin_anchor,margin_state,margin_input,margin_terminal,input_slack,state_slack,"
        "cand_stage,cand_initial,cand_terminal,cand_realizable,cand_cost,iterations,solve_seconds\n";
  for (const auto& st : rec.steps) {
    os << st.k;
    for (int i = 0; i < n; ++i) os << ',' << st.x(i);
    for (int i = 0; i < n; ++i) os << ',' << st.w(i);
    for (int i = 0; i < n; ++i) os << ',' << st.x_hat(i);
    for (int i = 0; i < m; ++i) os << ',' << st.u(i);
    os << ',' << st.stage_cost << ',' << st.objective << ',' << st.margins.anchor << ',' << st.margins.state << ','
       << st.margins.input << ',' << st.margins.terminal << ',' << st.input_slack << ',' << st.state_slack << ','
       << st.has_candidate * st.cand_stage << ',' << st.has_candidate * st.cand_initial << ','
       << st.has_candidate * st.cand_terminal << ',' << st.has_candidate * st.cand_realizable << ',' << st.cand_cost
       << ',' << st.iterations << ',' << st.solve_seconds << '\n';
  }
}

void write_rollout_csv(const std::string& path, const SimulationRecord& rec) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + path);
  os << std::setprecision(17);
  const int n = static_cast<int>(rec.rollout_plan.rows());
  os << "l";
  for (int i = 0; i < n; ++i) os << ",z_" << i + 1;
  for (int i = 0; i < n; ++i) os << ",xhat_" << i + 1;
  for (int i = 0; i < n; ++i) os << ",e_" << i + 1;
  os << '\n';
  for (Eigen::Index l = 0; l < rec.rollout_plan.cols(); ++l) {
    os << l;
    for (int i = 0; i < n; ++i) os << ',' << rec.rollout_plan(i, l);
    for (int i = 0; i < n; ++i) os << ',' << rec.rollout_x_hat(i, l);
    for (int i = 0; i < n; ++i) os << ',' << rec.rollout_plan(i, l) - rec.rollout_x_hat(i, l);
    os << '\n';
  }
}

}  // namespace trddpc
