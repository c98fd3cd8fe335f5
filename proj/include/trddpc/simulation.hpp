#pragma once

#include "trddpc/controller.hpp"
#include "trddpc/coverage.hpp"
#include "trddpc/design.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace trddpc {

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

enum class NoiseMode {
  kUniform,     // uniform over W (exact for boxes, hit-and-run otherwise)
  kVertex,      // uniform over the vertices of W
  kWorstCase,   // vertex of W maximizing <d, w> for a caller-supplied d
};

const char* to_string(NoiseMode mode);
/// Accepts "uniform", "vertex", "worst-case". Throws kInvalidArgument.
NoiseMode noise_mode_from_string(const std::string& s);

/// Deterministic per-step noise generator over a polytope W.
class NoiseSampler {
 public:
  NoiseSampler(const Polytope& W, NoiseMode mode, std::uint64_t seed);

  /// One draw. In worst-case mode `direction` selects the vertex (a random
  /// vertex when null or zero); it is ignored in the other modes.
  Vector sample(const Vector* direction = nullptr);
  /// True when W is not a box and uniform draws use hit-and-run.
  bool uses_hit_and_run() const { return hit_and_run_; }

 private:
  Polytope W_;
  NoiseMode mode_;
  std::mt19937_64 rng_;
  bool is_box_ = false;
  bool is_zero_ = false;
  bool hit_and_run_ = false;
  Vector lo_, hi_;
  Vector walker_;
};

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

/// Offline experiment plan used to produce the dataset.
struct DataPlan {
  int T_loc = 0;                 // initial local-excitation length
  int T_pre2 = 0;                // recovery length
  double prefix_amplitude = 1.0; // excitation amplitude a of the prefix inputs
  /// "uniform": prefix inputs uniform in [-a, a]; "feedback": K x_hat plus
  /// uniform excitation in [-a, a], clipped to the bounding box of U.
  std::string prefix_mode = "uniform";
  int pilot_length = 40;         // open-loop pilot used to pick K and V
  double pilot_amplitude = 1.0;
  double v_fraction = 0.9;       // V = v_fraction * (largest certified V scale) * (U ∩ -U)
  int retry_cap = 20;
};

struct SearchOptions {
  double max_scale = 100.0;      // cap on the noise scale
  double rel_width = 0.01;       // bisection stops at (hi - lo) <= rel_width * lo
  int seeds = 20;                // closed-loop runs per candidate scale
  int threads = 0;               // 0: hardware concurrency
};

struct Scenario {
  std::string name;
  Matrix A;  // ground truth, harness only
  Matrix B;
  Polytope X;
  Polytope U;
  Polytope W;
  Matrix Q;
  Matrix R;
  int L = 1;
  int T = 0;  // offline data length
  Vector x0;
  Vector data_x0;
  int steps = 10;
  std::vector<std::uint64_t> seeds;
  std::uint64_t design_seed = 1;
  double theta = 1.0;
  double eps_outer = 1e-3;
  double mu = 0.1;
  double noise_scale = 1.0;  // multiplies W everywhere
  NoiseMode noise_mode = NoiseMode::kUniform;
  bool baseline = true;
  DataPlan data;
  SearchOptions search;
  QpOptions solver;

  int n() const { return static_cast<int>(A.rows()); }
  int m() const { return static_cast<int>(B.cols()); }
  /// W scaled by noise_scale.
  Polytope noise_set() const;
  /// Controllability, dimensions, x0 in X, positive definite weights.
  /// Throws kDimensionMismatch / kInvalidArgument.
  void validate() const;
  DesignInputs design_inputs() const;

  nlohmann::json to_json() const;
  /// Sets accept {"box": r}, {"lo": [...], "hi": [...]}, {"G": ..., "h": ...}
  /// or {"points": [[...], ...]}; matrices are row-major nested arrays.
  /// Throws kIo on malformed documents.
  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::string& path);
};

/// Noisy plant x+ = A x + B u, x_hat = x + w used by the data collection.
PlantOracle make_plant_oracle(const Scenario& s, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Offline pipeline
// ---------------------------------------------------------------------------

struct PipelineOptions {
  /// When false, a failed terminal design is replaced by the best-effort set
  /// and reported through the assumption flags instead of throwing.
  bool strict_terminal = true;
};

struct PipelineResult {
  DesignArtifacts artifacts;
  CollectResult data;
  Matrix pilot_K;
  double pilot_v_scale = 0.0;  // largest certified scale of U ∩ -U in the pilot
  Polytope V;                  // excitation set used for the collection
  double seconds = 0.0;
};

/// Pilot experiment -> gain and V -> data collection -> final design with
/// that gain and V.
PipelineResult design_pipeline(const Scenario& s, const PipelineOptions& opts = {});

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

struct StepRecord {
  int k = 0;
  Vector x;      // true state
  Vector w;      // measurement noise
  Vector x_hat;  // measurement
  Vector u;
  Matrix Z;      // plan snapshot
  Matrix V;
  double objective = 0.0;
  GroupMargins margins;
  double solve_seconds = 0.0;
  int iterations = 0;
  double stage_cost = 0.0;
  double input_slack = 0.0;  // margin of u_k in U
  double state_slack = 0.0;  // margin of x_{k+1} in X
  /// Shift candidate built from step k-1 (absent at k = 0).
  bool has_candidate = false;
  bool cand_stage = false;
  bool cand_initial = false;
  bool cand_terminal = false;
  bool cand_realizable = false;
  double cand_cost = 0.0;
};

struct SimulationRecord {
  std::string controller;  // "trddpc" or "baseline"
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Vector x_final;
  double total_cost = 0.0;
  int input_violations = 0;
  int state_violations = 0;
  bool step_infeasible = false;
  int infeasible_step = -1;
  std::string failure;  // diagnostic dump when a step fails
  /// Plan-conditioned rollout of the first plan: true-system measurements
  /// x_hat_{l|0} under u_l = v_l + K x_hat_{l|0}, next to the plan z_{l|0}.
  Matrix rollout_x_hat;
  Matrix rollout_plan;

  double mean_solve_seconds() const;
  nlohmann::json summary_json() const;
};

struct RunOptions {
  ControllerOptions controller;
  std::optional<int> steps;
  std::optional<NoiseMode> mode;
};

/// Receding-horizon loop on the ground-truth plant. Never throws on step infeasibility:
/// the record carries step_infeasible and a state dump; other errors propagate.
SimulationRecord run_closed_loop(const Scenario& s, const DesignArtifacts& art, std::uint64_t seed,
                                 const RunOptions& opts = {});

/// One run per seed over worker threads; records are returned in seed order.
std::vector<SimulationRecord> run_batch(const Scenario& s, const DesignArtifacts& art,
                                        const std::vector<std::uint64_t>& seeds, const RunOptions& opts = {},
                                        int threads = 0);

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

struct AuditReport {
  bool constraints = true;
  double worst_input_slack = 0.0;
  double worst_state_slack = 0.0;
  bool anchoring = true;
  double worst_anchor = 0.0;
  bool recursive_feasibility = true;
  bool shift_items = true;
  bool iss_decrease = true;
  double worst_iss_residual = 0.0;  // max of dV + kappa |x_hat|^2 - c_hat
  bool sandwich = true;
  double worst_sandwich = 0.0;      // max violation of the value bounds (<= 0 passes)
  int first_failure_step = -1;
  std::string located;              // description of the first failure

  bool all() const {
    return constraints && anchoring && recursive_feasibility && shift_items && iss_decrease && sandwich;
  }
  nlohmann::json to_json() const;
};

/// Checks a complete record. Shift-candidate items are checked only on
/// steps that carry a candidate (baseline records carry none).
AuditReport audit_theorems(const SimulationRecord& rec, const DesignArtifacts& art, double tol = 1e-9);

// ---------------------------------------------------------------------------
// Noise-limit search
// ---------------------------------------------------------------------------

struct SearchResult {
  double scale = 0.0;       // largest admissible multiple of W
  double noise_level = 0.0; // scale * (inf-norm radius of W)
  std::vector<std::pair<double, bool>> history;
  std::string last_failure;
};

/// True when the full pipeline at W_s = scale W designs with nonempty
/// tightened sets, an RPI tube and a tail-coverage certificate, and
/// `opts.seeds` closed-loop runs stay feasible without violations.
bool noise_scale_admissible(const Scenario& s, double scale, const SearchOptions& opts, std::string* why = nullptr);

/// Bisection on the noise scale; 0 when the base scenario is not admissible.
SearchResult search_max_noise(const Scenario& s, const SearchOptions& opts);

// ---------------------------------------------------------------------------
// Model-based baseline
// ---------------------------------------------------------------------------

struct BaselineDesign {
  Matrix A_K;
  Matrix K;
  Matrix P_L;
  double gamma_tilde = 0.0;
  Polytope E;
  Polytope Z;
  Polytope U_hat;
  Polytope Z_f;
  int moas_iterations = 0;
};

/// Tube MPC ingredients with the true model and the same K and P_L.
/// Throws kTightenedSetEmpty or kNoTermination.
BaselineDesign design_baseline(const Scenario& s, const Matrix& K, const Matrix& P_L);

SimulationRecord baseline_tube_mpc(const Scenario& s, const BaselineDesign& bd, std::uint64_t seed,
                                   const RunOptions& opts = {});

std::vector<SimulationRecord> run_baseline_batch(const Scenario& s, const BaselineDesign& bd,
                                                 const std::vector<std::uint64_t>& seeds,
                                                 const RunOptions& opts = {}, int threads = 0);

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// One row per step: k, x_*, w_*, xhat_*, u_*, objective, margins, slacks,
/// candidate flags, solve_seconds.
void write_record_csv(const std::string& path, const SimulationRecord& rec);
/// Rollout of the first plan next to the plan itself.
void write_rollout_csv(const std::string& path, const SimulationRecord& rec);

}  // namespace trddpc
