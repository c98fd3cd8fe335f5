// Command-line front end: collect -> design -> check-assumptions -> run ->
// search-noise -> compare-baseline, driven by a scenario JSON document.

#include "trddpc/error.hpp"
#include "trddpc/json_util.hpp"
#include "trddpc/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace trddpc;

namespace {

std::mutex g_out_mutex;

void say(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_out_mutex);
  std::cout << line << '\n';
}

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string seeds;
  std::string out = "out";
  std::optional<double> theta;
  std::optional<double> noise_scale;
  std::optional<double> solver_tol;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_config = true) {
  auto* c = cmd->add_option("--config", f.config, "scenario JSON file");
  if (needs_config) c->required();
  cmd->add_option("--seed", f.seed, "design (data-collection) seed");
  cmd->add_option("--seeds", f.seeds, "closed-loop seeds: N (1..N), a-b, or a comma list");
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--theta", f.theta, "simplex scaling theta");
  cmd->add_option("--noise-scale", f.noise_scale, "multiplier of the noise set W");
  cmd->add_option("--solver-tol", f.solver_tol, "QP residual tolerance");
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  try {
    if (text.find(',') != std::string::npos) {
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
      }
    } else if (const auto dash = text.find('-'); dash != std::string::npos && dash > 0) {
      const std::uint64_t a = std::stoull(text.substr(0, dash));
      const std::uint64_t b = std::stoull(text.substr(dash + 1));
      for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
    } else {
      const std::uint64_t n = std::stoull(text);
      for (std::uint64_t s = 1; s <= n; ++s) out.push_back(s);
    }
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "cannot parse --seeds '" + text + "'");
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "--seeds selects no seed");
  return out;
}

Scenario load_scenario(const CommonFlags& f) {
  Scenario s = Scenario::load(f.config);
  if (f.seed) s.design_seed = *f.seed;
  if (!f.seeds.empty()) s.seeds = parse_seeds(f.seeds);
  if (f.theta) s.theta = *f.theta;
  if (f.noise_scale) s.noise_scale = *f.noise_scale;
  if (f.solver_tol) s.solver.tol = *f.solver_tol;
  s.validate();
  return s;
}

fs::path out_dir(const CommonFlags& f) {
  std::error_code ec;
  fs::create_directories(f.out, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create output directory " + f.out + ": " + ec.message());
  return fs::path(f.out);
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream os(p);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  os << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot read " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIo, path + ": " + e.what());
  }
}

/// Vertices of a polytope as CSV rows (plot data for the tube cross-section).
void write_vertices_csv(const fs::path& p, const Polytope& P) {
  std::ofstream os(p);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  for (int i = 0; i < P.dim(); ++i) os << (i ? "," : "") << "e_" << (i + 1);
  os << '\n';
  os.precision(17);
  for (int c = 0; c < P.num_vertices(); ++c) {
    for (int i = 0; i < P.dim(); ++i) os << (i ? "," : "") << P.vertices()(i, c);
    os << '\n';
  }
}

/// One JSON object per step: k, xhat, u, z_star, v_star, objective, margins, status.
void write_step_log(const fs::path& p, const SimulationRecord& rec) {
  std::ofstream os(p);
  if (!os) throw Error(ErrorCode::kIo, "cannot write " + p.string());
  for (const StepRecord& st : rec.steps) {
    nlohmann::json z = nlohmann::json::array(), v = nlohmann::json::array();
    for (Eigen::Index l = 0; l < st.Z.cols(); ++l) z.push_back(vector_to_json(st.Z.col(l)));
    for (Eigen::Index l = 0; l < st.V.cols(); ++l) v.push_back(vector_to_json(st.V.col(l)));
    nlohmann::json j = {{"k", st.k},         {"xhat", vector_to_json(st.x_hat)},
                        {"u", vector_to_json(st.u)}, {"z_star", z},
                        {"v_star", v},       {"objective", st.objective},
                        {"margins", st.margins.to_json()}, {"status", "optimal"}};
    os << j.dump() << '\n';
  }
  if (rec.step_infeasible) {
    os << nlohmann::json{{"k", rec.infeasible_step}, {"status", "infeasible"}, {"failure", rec.failure}}.dump()
       << '\n';
  }
}

DesignArtifacts artifacts_for(const Scenario& s, const std::string& design_path) {
  if (!design_path.empty()) return DesignArtifacts::from_json(read_json(design_path));
  return design_pipeline(s).artifacts;
}

nlohmann::json batch_aggregate(const std::vector<SimulationRecord>& recs, const DesignArtifacts* art) {
  double cost = 0.0, solve = 0.0;
  int in_viol = 0, st_viol = 0, infeasible = 0, audits_failed = 0;
  nlohmann::json runs = nlohmann::json::array();
  for (const SimulationRecord& r : recs) {
    nlohmann::json j = r.summary_json();
    if (art != nullptr) {
      const AuditReport a = audit_theorems(r, *art);
      j["audit"] = a.to_json();
      audits_failed += a.all() ? 0 : 1;
    }
    runs.push_back(j);
    cost += r.total_cost;
    solve += r.mean_solve_seconds();
    in_viol += r.input_violations;
    st_viol += r.state_violations;
    infeasible += r.step_infeasible ? 1 : 0;
  }
  const double n = recs.empty() ? 1.0 : static_cast<double>(recs.size());
  nlohmann::json agg = {{"runs", recs.size()},
                        {"mean_total_cost", cost / n},
                        {"mean_solve_seconds", solve / n},
                        {"input_violations", in_viol},
                        {"state_violations", st_viol},
                        {"infeasible_runs", infeasible}};
  if (art != nullptr) agg["failed_audits"] = audits_failed;
  return {{"aggregate", agg}, {"records", runs}};
}

// ----------------------------------------------------------------- commands

int cmd_collect(const CommonFlags& f) {
  const Scenario s = load_scenario(f);
  const fs::path dir = out_dir(f);
  const PipelineResult pr = design_pipeline(s);
  write_trajectory_csv((dir / "trajectory.csv").string(), pr.data.traj);
  nlohmann::json rep = {{"T", pr.data.traj.length()},
                        {"attempts", pr.data.attempts},
                        {"t_loc_history", pr.data.t_loc_history},
                        {"residual_history", pr.data.residual_history},
                        {"coverage_feasible", pr.data.coverage.feasible},
                        {"coverage_support", pr.data.coverage.support},
                        {"tail_deviation", pr.data.deviation.ok},
                        {"pe", pr.data.pe.ok},
                        {"K", matrix_to_json(pr.pilot_K)},
                        {"V", pr.V.to_json()}};
  write_json(dir / "collect.json", rep);
  say("collect: T = " + std::to_string(pr.data.traj.length()) + " after " + std::to_string(pr.data.attempts) +
      " attempt(s); trajectory written to " + (dir / "trajectory.csv").string());
  return 0;
}

int cmd_design(const CommonFlags& f, const std::string& traj_path) {
  const Scenario s = load_scenario(f);
  const fs::path dir = out_dir(f);
  DesignArtifacts art;
  if (traj_path.empty()) {
    art = design_pipeline(s).artifacts;
  } else {
    DesignOptions opts;
    opts.V_shape = intersect(s.U, s.U.scaled(-1.0));
    art = design_from_data(read_trajectory_csv(traj_path), s.design_inputs(), opts);
  }
  write_json(dir / "design.json", art.to_json());
  write_vertices_csv(dir / "E_vertices.csv", art.tube.E);
  std::ostringstream os;
  os << "design: T = " << art.traj.length() << ", gamma* = " << art.gamma.gamma << ", K = [" << art.K()
     << "], E radius = " << art.tube.E.radius() << ", Z vertices = " << art.tube.Z.num_vertices()
     << ", U_hat vertices = " << art.tube.U_hat.num_vertices() << ", Z_f vertices = " << art.terminal.Z_f.num_vertices()
     << "\nassumptions: " << art.assumptions.to_json().dump();
  say(os.str());
  return art.assumptions.all() ? 0 : 2;
}

int cmd_check(const CommonFlags& f, const std::string& traj_path, const std::string& design_path) {
  const fs::path dir = out_dir(f);
  const DesignArtifacts art = DesignArtifacts::from_json(read_json(design_path));
  const Trajectory traj = read_trajectory_csv(traj_path);
  const HankelSystem hs = build_hankel(traj, art.L() + 1);
  const PeReport pe = check_pe(traj.u, art.L() + traj.n() + 1);
  const TailDeviationReport dev =
      check_tail_deviation(hs, art.K(), art.terminal.V_poly.scaled(1.0 / art.inputs.theta));
  const CoverageCertificate cov = check_tail_coverage(hs, traj);
  const nlohmann::json rep = {{"pe", pe.ok},
                              {"tail_deviation", dev.ok},
                              {"tail_coverage", cov.feasible},
                              {"h", vector_to_json(cov.h.g)},
                              {"coverage_residual", cov.residual},
                              {"deviation_min_slack", dev.min_slack}};
  write_json(dir / "assumptions.json", rep);
  say(rep.dump());
  return pe.ok && dev.ok && cov.feasible ? 0 : 2;
}

int cmd_run(const CommonFlags& f, const std::string& design_path) {
  const Scenario s = load_scenario(f);
  const fs::path dir = out_dir(f);
  const DesignArtifacts art = artifacts_for(s, design_path);
  RunOptions ro;
  ro.controller.qp = s.solver;
  const std::vector<SimulationRecord> recs = run_batch(s, art, s.seeds, ro, s.search.threads);
  for (const SimulationRecord& r : recs) {
    const std::string tag = std::to_string(r.seed);
    write_record_csv((dir / ("record_" + tag + ".csv")).string(), r);
    write_step_log(dir / ("steps_" + tag + ".jsonl"), r);
  }
  if (!recs.empty() && recs.front().rollout_x_hat.cols() > 0) {
    write_rollout_csv((dir / "rollout.csv").string(), recs.front());
  }
  write_vertices_csv(dir / "E_vertices.csv", art.tube.E);
  const nlohmann::json summary = batch_aggregate(recs, &art);
  write_json(dir / "summary.json", summary);
  say("run: " + summary["aggregate"].dump());
  const auto& agg = summary["aggregate"];
  const bool ok = agg["infeasible_runs"] == 0 && agg["input_violations"] == 0 && agg["state_violations"] == 0;
  return ok ? 0 : 3;
}

int cmd_search(const CommonFlags& f) {
  const Scenario s = load_scenario(f);
  const fs::path dir = out_dir(f);
  const SearchResult r = search_max_noise(s, s.search);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [scale, ok] : r.history) hist.push_back({{"scale", scale}, {"admissible", ok}});
  const nlohmann::json rep = {{"scale", r.scale},
                              {"noise_level", r.noise_level},
                              {"history", hist},
                              {"last_failure", r.last_failure}};
  write_json(dir / "search.json", rep);
  std::ostringstream os;
  os << "search-noise: max admissible |w|_inf = " << r.noise_level << " (scale " << r.scale << ")";
  say(os.str());
  return 0;
}

int cmd_compare(const CommonFlags& f, bool with_search) {
  const Scenario s = load_scenario(f);
  const fs::path dir = out_dir(f);
  const PipelineResult pr = design_pipeline(s);
  const DesignArtifacts& art = pr.artifacts;
  RunOptions ro;
  ro.controller.qp = s.solver;
  const std::vector<SimulationRecord> td = run_batch(s, art, s.seeds, ro, s.search.threads);
  const BaselineDesign bd = design_baseline(s, art.K(), art.weight.P_L);
  const std::vector<SimulationRecord> bl = run_baseline_batch(s, bd, s.seeds, ro, s.search.threads);
  const nlohmann::json jt = batch_aggregate(td, &art);
  const nlohmann::json jb = batch_aggregate(bl, nullptr);
  // Paired relative gap: per-seed costs on identical noise realizations.
  double gap = 0.0;
  int paired = 0;
  for (std::size_t i = 0; i < td.size(); ++i) {
    if (td[i].step_infeasible || bl[i].step_infeasible) continue;
    gap += (td[i].total_cost - bl[i].total_cost) / bl[i].total_cost;
    ++paired;
  }
  gap = paired > 0 ? gap / paired : 0.0;
  std::optional<double> max_noise;
  if (with_search) max_noise = search_max_noise(s, s.search).noise_level;
  nlohmann::json rep = {{"scenario", s.name},
                        {"trddpc", jt["aggregate"]},
                        {"baseline", jb["aggregate"]},
                        {"paired_runs", paired},
                        {"relative_cost_gap", gap},
                        {"design_seconds", pr.seconds},
                        {"T", art.traj.length()},
                        {"max_admissible_noise", max_noise ? nlohmann::json(*max_noise) : nlohmann::json()}};
  rep["trddpc_records"] = jt["records"];
  rep["baseline_records"] = jb["records"];
  write_json(dir / "compare.json", rep);
  {
    std::ofstream os(dir / "compare.csv");
    if (!os) throw Error(ErrorCode::kIo, "cannot write compare.csv");
    os.precision(10);
    os << "controller,mean_total_cost,mean_solve_seconds,max_admissible_noise,relative_cost_gap\n";
    os << "trddpc," << jt["aggregate"]["mean_total_cost"].get<double>() << ','
       << jt["aggregate"]["mean_solve_seconds"].get<double>() << ',' << (max_noise ? std::to_string(*max_noise) : "")
       << ',' << gap << '\n';
    os << "baseline," << jb["aggregate"]["mean_total_cost"].get<double>() << ','
       << jb["aggregate"]["mean_solve_seconds"].get<double>() << ",,0\n";
  }
  std::ostringstream os;
  os.precision(7);
  os << "compare-baseline [" << s.name << "]: trddpc cost " << jt["aggregate"]["mean_total_cost"].get<double>()
     << ", baseline cost " << jb["aggregate"]["mean_total_cost"].get<double>() << ", relative gap "
     << 100.0 * gap << "% over " << paired << " paired run(s)";
  if (max_noise) os << ", max admissible noise " << *max_noise;
  say(os.str());
  return jt["aggregate"]["infeasible_runs"] == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tube-based robust data-driven predictive control"};
  app.require_subcommand(1);
  CommonFlags f;
  std::string traj_path, design_path;
  bool with_search = false;

  auto* collect = app.add_subcommand("collect", "run the data-collection experiment");
  add_common(collect, f);
  auto* design = app.add_subcommand("design", "synthesize the offline ingredients");
  add_common(design, f);
  design->add_option("--trajectory", traj_path, "trajectory CSV (default: collect from the scenario)");
  auto* check = app.add_subcommand("check-assumptions", "check data assumptions against a design");
  add_common(check, f, false);
  check->add_option("--trajectory", traj_path, "trajectory CSV")->required();
  check->add_option("--design", design_path, "design JSON")->required();
  auto* run = app.add_subcommand("run", "closed-loop simulation over seeds");
  add_common(run, f);
  run->add_option("--design", design_path, "design JSON (default: design from the scenario)");
  auto* search = app.add_subcommand("search-noise", "largest admissible noise scale");
  add_common(search, f);
  auto* compare = app.add_subcommand("compare-baseline", "data-driven controller vs model-based tube MPC");
  add_common(compare, f);
  compare->add_flag("--with-search", with_search, "also run the noise-limit search");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (*collect) return cmd_collect(f);
    if (*design) return cmd_design(f, traj_path);
    if (*check) return cmd_check(f, traj_path, design_path);
    if (*run) return cmd_run(f, design_path);
    if (*search) return cmd_search(f);
    if (*compare) return cmd_compare(f, with_search);
  } catch (const Error& e) {
    std::lock_guard<std::mutex> lock(g_out_mutex);
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::lock_guard<std::mutex> lock(g_out_mutex);
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
