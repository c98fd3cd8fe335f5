// Acceptance run: one PASS/FAIL line per criterion. The process exits with
// a nonzero status only when the harness itself breaks (an exception); a
// failing criterion is reported on its line.

#include "trddpc/error.hpp"
#include "trddpc/lp.hpp"
#include "trddpc/simulation.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace trddpc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  std::printf("[%s] criterion %d: %s -- %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

std::vector<std::uint64_t> first_seeds(const Scenario& s, std::size_t count) {
  std::vector<std::uint64_t> out(s.seeds.begin(), s.seeds.begin() + static_cast<long>(std::min(count, s.seeds.size())));
  return out;
}

struct Campaign {
  Scenario s;
  PipelineResult design;
  double design_seconds = 0.0;
  std::vector<SimulationRecord> batch;  // 100 seeds
  std::vector<AuditReport> audits;
  double batch_seconds = 0.0;
};

Campaign prepare(const std::string& path, std::size_t seeds) {
  Campaign c;
  c.s = Scenario::load(path);
  const auto t0 = Clock::now();
  c.design = design_pipeline(c.s);
  c.design_seconds = seconds_since(t0);
  const auto t1 = Clock::now();
  RunOptions ro;
  ro.controller.qp = c.s.solver;
  c.batch = run_batch(c.s, c.design.artifacts, first_seeds(c.s, seeds), ro);
  c.batch_seconds = seconds_since(t1);
  for (const SimulationRecord& r : c.batch) c.audits.push_back(audit_theorems(r, c.design.artifacts));
  return c;
}

double terminal_window_norm(const SimulationRecord& r, int window) {
  const int n = static_cast<int>(r.steps.size());
  if (n == 0) return 0.0;
  double acc = 0.0;
  int cnt = 0;
  for (int k = std::max(0, n - window + 1); k < n; ++k, ++cnt) acc += r.steps[static_cast<std::size_t>(k)].x.norm();
  acc += r.x_final.norm();
  return acc / (cnt + 1);
}

// --------------------------------------------------------------- criterion 1
void criterion1(const Campaign& sc) {
  const auto t0 = Clock::now();
  const Scenario& s = sc.s;
  RunOptions ro;
  ro.controller.qp = s.solver;
  const std::vector<std::uint64_t> seeds = first_seeds(s, 20);
  const auto recs = run_batch(s, sc.design.artifacts, seeds, ro);
  const BaselineDesign bd = design_baseline(s, sc.design.artifacts.K(), sc.design.artifacts.weight.P_L);
  const auto base = run_baseline_batch(s, bd, seeds, ro);
  double cost = 0.0, bcost = 0.0, lo = 1e300, hi = -1e300;
  bool feasible = true;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    cost += recs[i].total_cost / static_cast<double>(recs.size());
    bcost += base[i].total_cost / static_cast<double>(base.size());
    lo = std::min(lo, recs[i].total_cost);
    hi = std::max(hi, recs[i].total_cost);
    feasible = feasible && !recs[i].step_infeasible;
  }
  const double secs = sc.design_seconds + seconds_since(t0);
  const double rel = (cost - 1.374937) / 1.374937;
  const bool pass = feasible && std::abs(rel) <= 0.05 && secs < 30.0;
  report(1, pass, "scalar cost within 5% of 1.374937",
         "mean TRDDPC cost " + fmt(cost, 7) + " over " + std::to_string(recs.size()) + " seeds (range [" +
             fmt(lo, 7) + ", " + fmt(hi, 7) + "], deviation " + fmt(100 * rel, 3) + "%), baseline " +
             fmt(bcost, 7) + ", " + fmt(secs, 3) + " s");
}

// --------------------------------------------------------------- criterion 2
void criterion2(const Campaign& sc) {
  const auto t0 = Clock::now();
  const SearchResult r = search_max_noise(sc.s, sc.s.search);
  const double secs = seconds_since(t0);
  const double rel = (r.noise_level - 0.214) / 0.214;
  const bool pass = std::abs(rel) <= 0.20 && secs < 300.0;
  report(2, pass, "scalar max admissible noise within 20% of 0.214",
         "limit " + fmt(r.noise_level, 5) + " (deviation " + fmt(100 * rel, 3) + "%), first rejected scale: " +
             r.last_failure + ", " + fmt(secs, 3) + " s");
}

// --------------------------------------------------------------- criterion 3
void criterion3(const Campaign& fl) {
  const auto t0 = Clock::now();
  const Scenario& s = fl.s;
  RunOptions ro;
  ro.controller.qp = s.solver;
  const std::vector<std::uint64_t> seeds = first_seeds(s, 20);
  const auto recs = run_batch(s, fl.design.artifacts, seeds, ro);
  const BaselineDesign bd = design_baseline(s, fl.design.artifacts.K(), fl.design.artifacts.weight.P_L);
  const auto base = run_baseline_batch(s, bd, seeds, ro);
  double sum_t = 0.0, sum_b = 0.0, worst = -1e300;
  bool feasible = true;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    feasible = feasible && !recs[i].step_infeasible && !base[i].step_infeasible;
    sum_t += recs[i].total_cost;
    sum_b += base[i].total_cost;
    worst = std::max(worst, (recs[i].total_cost - base[i].total_cost) / base[i].total_cost);
  }
  const double gap = (sum_t - sum_b) / sum_b;
  const double secs = fl.design_seconds + seconds_since(t0);
  const bool pass = feasible && gap <= 0.02 && secs < 120.0;
  report(3, pass, "flight cost gap to model-based tube MPC <= 2%",
         "paired gap " + fmt(100 * gap, 4) + "% over " + std::to_string(recs.size()) + " seeds (worst seed " +
             fmt(100 * worst, 4) + "%), costs " + fmt(sum_t / recs.size(), 7) + " vs " + fmt(sum_b / recs.size(), 7) +
             ", " + fmt(secs, 3) + " s");
}

// --------------------------------------------------------------- criterion 4
void criterion4(const Campaign& fl, const Campaign& sc) {
  int viol = 0, runs = 0;
  double worst = 1e300;
  for (const Campaign* c : {&fl, &sc}) {
    for (std::size_t i = 0; i < c->batch.size(); ++i) {
      ++runs;
      viol += c->batch[i].input_violations + c->batch[i].state_violations;
      if (!c->audits[i].constraints) ++viol;
      worst = std::min({worst, c->audits[i].worst_input_slack, c->audits[i].worst_state_slack});
    }
  }
  const bool pass = viol == 0 && runs == static_cast<int>(fl.batch.size() + sc.batch.size());
  report(4, pass, "zero constraint violations (100 flight + 100 scalar runs)",
         std::to_string(viol) + " violations over " + std::to_string(runs) + " runs, worst slack " + fmt(worst, 4));
}

// --------------------------------------------------------------- criterion 5
void criterion5(const Campaign& fl, const Campaign& sc) {
  int start_infeasible = 0, later_infeasible = 0, shift_fail = 0, checked = 0;
  for (const Campaign* c : {&fl, &sc}) {
    for (std::size_t i = 0; i < c->batch.size(); ++i) {
      const SimulationRecord& r = c->batch[i];
      if (r.step_infeasible && r.infeasible_step == 0) ++start_infeasible;
      if (r.step_infeasible && r.infeasible_step > 0) ++later_infeasible;
      for (const StepRecord& st : r.steps) {
        if (!st.has_candidate) continue;
        ++checked;
        if (!(st.cand_stage && st.cand_initial && st.cand_terminal && st.cand_realizable)) ++shift_fail;
      }
    }
  }
  const bool pass = later_infeasible == 0 && start_infeasible == 0 && shift_fail == 0 && checked > 0;
  report(5, pass, "recursive feasibility and shift-candidate items",
         std::to_string(later_infeasible) + " infeasible steps after a feasible start, " +
             std::to_string(start_infeasible) + " infeasible starts, " + std::to_string(shift_fail) + " of " +
             std::to_string(checked) + " shift candidates failing an item");
}

// --------------------------------------------------------------- criterion 6
void criterion6(const Campaign& fl, const Campaign& sc) {
  bool pass = true;
  std::ostringstream os;
  for (const Campaign* c : {&fl, &sc}) {
    const DesignArtifacts& a = c->design.artifacts;
    const double tube = rpi_margin(a.family.A_K.vertices, a.tube.E, a.tube.D);
    const double term = rpi_margin(a.family.A_K.vertices, a.terminal.Z_f, a.terminal.Omega);
    const double state = contains(a.tube.Z, a.terminal.Z_f).margin;
    const double input =
        contains(a.tube.U_hat, minkowski_sum(linear_image(a.K(), a.terminal.Z_f), a.terminal.V_poly)).margin;
    pass = pass && tube >= 0 && term >= 0 && state >= 0 && input >= 0;
    os << c->s.name << ": tube " << fmt(tube, 3) << ", terminal RPI " << fmt(term, 3) << ", Z_f in Z "
       << fmt(state, 3) << ", K Z_f + V in U_hat " << fmt(input, 3) << "; ";
  }
  report(6, pass, "RPI and terminal certificates with nonnegative margins", os.str());
}

// --------------------------------------------------------------- criterion 7
void criterion7(const Campaign& fl, const Campaign& sc) {
  int decrease_fail = 0, steps = 0;
  double worst = -1e300;
  for (const Campaign* c : {&fl, &sc}) {
    for (std::size_t i = 0; i < c->batch.size(); ++i) {
      steps += static_cast<int>(c->batch[i].steps.size());
      if (!c->audits[i].iss_decrease) ++decrease_fail;
      worst = std::max(worst, c->audits[i].worst_iss_residual);
    }
  }
  // Halved noise bound, same seeds: the terminal-window mean state norm
  // must not grow.
  int mono_fail = 0, compared = 0;
  double worst_increase = -1e300;
  for (const Campaign* c : {&fl, &sc}) {
    Scenario half = c->s;
    half.noise_scale *= 0.5;
    const PipelineResult pr = design_pipeline(half);
    RunOptions ro;
    ro.controller.qp = half.solver;
    const std::vector<std::uint64_t> seeds = first_seeds(half, 20);
    const auto recs = run_batch(half, pr.artifacts, seeds, ro);
    const int window = std::max(1, c->s.steps / 2);
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const double full = terminal_window_norm(c->batch[i], window);
      const double hv = terminal_window_norm(recs[i], window);
      ++compared;
      worst_increase = std::max(worst_increase, hv - full);
      if (recs[i].step_infeasible || hv > full + 1e-6) ++mono_fail;
    }
  }
  const bool pass = decrease_fail == 0 && mono_fail == 0;
  report(7, pass, "ISS decrease at every step; halved noise does not raise the terminal state norm",
         std::to_string(decrease_fail) + " runs violating the decrease bound over " + std::to_string(steps) +
             " steps (worst residual " + fmt(worst, 4) + "); " + std::to_string(mono_fail) + " of " +
             std::to_string(compared) + " seed pairs with a larger terminal-window norm (worst increase " +
             fmt(worst_increase, 4) + ")");
}

// --------------------------------------------------------------- criterion 8
double support_brute(const Polytope& P, const Vector& d) { return (d.transpose() * P.vertices()).maxCoeff(); }

Polytope random_polytope(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> np(dim + 1, dim + 8);
  Matrix pts(dim, np(rng));
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = nd(rng);
  return Polytope::from_points(pts);
}

Vector random_radius(int dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ud(0.2, 2.0);
  Vector r(dim);
  for (int i = 0; i < dim; ++i) r(i) = ud(rng);
  return r;
}

// Smallest gamma with M W ⊆ gamma W by bisection on vertex membership.
double gauge_bisect(const Matrix& M, const Polytope& W) {
  const Matrix img = M * W.vertices();
  auto inside = [&](double g) {
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      if ((W.G() * img.col(c) - g * W.h()).maxCoeff() > 0.0) return false;
    }
    return true;
  };
  double lo = 0.0, hi = 1.0;
  while (!inside(hi)) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (inside(mid) ? hi : lo) = mid;
  }
  return hi;
}

void criterion8() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  int failures = 0;
  auto check = [&](double err) {
    worst = std::max(worst, err);
    if (!(err <= 1e-6)) ++failures;
  };
  std::vector<Vector> dirs2, dirs3;
  for (int k = 0; k < 16; ++k) {
    const double a = 2.0 * M_PI * k / 16.0;
    Vector d2(2);
    d2 << std::cos(a), std::sin(a);
    dirs2.push_back(d2);
    Vector d3(3);
    d3 << std::cos(a) * std::cos(0.7 * k), std::sin(a) * std::cos(0.7 * k), std::sin(0.7 * k);
    dirs3.push_back(d3);
  }
  for (int inst = 0; inst < 200; ++inst) {
    const int dim = inst % 2 == 0 ? 2 : 3;
    const std::vector<Vector>& dirs = dim == 2 ? dirs2 : dirs3;
    switch (inst % 4 < 2 ? inst % 4 : 2 + (inst / 4) % 2) {
      case 0: {
        // Axis boxes: sum, difference and gauge norm in closed form.
        const Vector a = random_radius(dim, rng) + Vector::Constant(dim, 2.0);
        const Vector b = random_radius(dim, rng);
        const Polytope A = Polytope::symmetric_box(a), B = Polytope::symmetric_box(b);
        const Polytope S = minkowski_sum(A, B), D = pontryagin_diff(A, B);
        for (const Vector& d : dirs) {
          check(std::abs(support_brute(S, d) - d.cwiseAbs().dot(a + b)));
          check(std::abs(support_brute(D, d) - d.cwiseAbs().dot(a - b)));
        }
        Matrix M(dim, dim);
        for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = nd(rng);
        double g = 0.0;
        for (int i = 0; i < dim; ++i) g = std::max(g, M.row(i).cwiseAbs().dot(b) / b(i));
        check(std::abs(gauge_norm(M, B) - g) / std::max(1.0, g));
        break;
      }
      case 1: {
        // Support additivity of the Minkowski sum of random polytopes.
        const Polytope A = random_polytope(dim, rng), B = random_polytope(dim, rng);
        const Polytope S = minkowski_sum(A, B);
        for (const Vector& d : dirs) {
          check(std::abs(support_brute(S, d) - support_brute(A, d) - support_brute(B, d)));
        }
        break;
      }
      case 2: {
        // Pontryagin difference against the stacked-constraint LP
        // max d'x s.t. x + q in A for every vertex q of B.
        const Polytope A = random_polytope(dim, rng).translated(Vector::Zero(dim)).scaled(3.0);
        const Polytope Bc = Polytope::symmetric_box(random_radius(dim, rng) * 0.1);
        const Polytope D = pontryagin_diff(A, Bc);
        const int nq = Bc.num_vertices();
        Matrix G(A.G().rows() * nq, dim);
        Vector h(A.G().rows() * nq);
        for (int q = 0; q < nq; ++q) {
          G.middleRows(q * A.G().rows(), A.G().rows()) = A.G();
          h.segment(q * A.G().rows(), A.G().rows()) = A.h() - A.G() * Bc.vertices().col(q);
        }
        if (!lp_feasible(G, h)) {
          check(D.is_empty() ? 0.0 : 1.0);
          break;
        }
        for (const Vector& d : dirs) {
          const LpMaxResult r = lp_maximize(G, h, d);
          check(D.is_empty() ? 1.0 : std::abs(support_brute(D, d) - r.value));
        }
        break;
      }
      default: {
        // Gauge norm of a random matrix on a random symmetric polytope.
        Matrix pts(dim, 4);
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = nd(rng);
        Matrix sym(dim, 8);
        sym << pts, -pts;
        const Polytope W = Polytope::from_points(sym);
        if (W.chebyshev_radius() < 1e-3) break;
        Matrix M(dim, dim);
        for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = nd(rng);
        const double g = gauge_bisect(M, W);
        check(std::abs(gauge_norm(M, W) - g) / std::max(1.0, g));
        break;
      }
    }
  }
  const double secs = seconds_since(t0);
  report(8, failures == 0 && secs < 10.0, "geometry operations match brute-force oracles",
         std::to_string(failures) + " mismatches on 200 instances, worst error " + fmt(worst, 3) + ", " +
             fmt(secs, 3) + " s");
}

// --------------------------------------------------------------- criterion 9
void criterion9() {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  int violations = 0;
  double worst = -1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const int dim = 1 + trial % 3;
    // Admissible noise set: a random full-dimensional polytope or a box.
    Polytope W;
    if (trial % 2 == 0) {
      W = Polytope::symmetric_box(random_radius(dim, rng));
    } else {
      do {
        W = random_polytope(dim, rng);
      } while (W.chebyshev_radius() < 1e-3);
    }
    const int L = 1 + trial % 5;
    const int T = L + 2 + static_cast<int>(ud(rng) * 30);
    // Noise sequence inside W: random convex combinations of vertices.
    Trajectory tr;
    tr.x_hat.resize(dim, T);
    tr.u = Matrix::Zero(1, T);
    for (int t = 0; t < T; ++t) {
      Vector lam(W.num_vertices());
      for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = -std::log(1.0 - ud(rng));
      if (trial % 7 == 0) {
        lam.setZero();
        lam(static_cast<Eigen::Index>(ud(rng) * W.num_vertices()) % W.num_vertices()) = 1.0;
      }
      tr.x_hat.col(t) = W.vertices() * (lam / lam.sum());
    }
    const HankelSystem hs = build_hankel(tr, L + 1);
    const int N = T - L;
    Vector g(N);
    for (int i = 0; i < N; ++i) g(i) = -std::log(1.0 - ud(rng));
    g /= g.sum();
    const int ell = static_cast<int>(ud(rng) * (L + 1)) % (L + 1);
    const Vector w = hs.x_block(ell) * g;
    const double excess = (W.G() * w - W.h()).maxCoeff();
    worst = std::max(worst, excess);
    const double tol = 1e-12 * (1.0 + W.h().cwiseAbs().maxCoeff());
    if (excess > tol) ++violations;
  }
  report(9, violations == 0, "convex combinations of admissible noise windows stay in W",
         std::to_string(violations) + " of 1000 triples outside W (largest facet excess " + fmt(worst, 3) + ")");
}

// -------------------------------------------------------------- criterion 10
void criterion10(const Campaign& fl, const Campaign& sc) {
  bool pass = true;
  std::ostringstream os;
  for (const Campaign* c : {&fl, &sc}) {
    const DesignArtifacts& a = c->design.artifacts;
    const double eig = a.gain.min_vertex_eig();
    const Matrix AK = c->s.A + c->s.B * a.K();
    const double rho = Eigen::EigenSolver<Matrix>(AK).eigenvalues().cwiseAbs().maxCoeff();
    pass = pass && eig >= -1e-7 && rho < 1.0;
    os << c->s.name << ": min LMI eigenvalue " << fmt(eig, 3) << ", spectral radius " << fmt(rho, 4) << "; ";
  }
  report(10, pass, "gain certificate LMIs hold and the true closed loop is Schur", os.str());
}

}  // namespace

int main() {
  try {
    std::printf("acceptance: preparing designs and 100-seed batches\n");
    std::fflush(stdout);
    const Campaign sc = prepare("scenarios/scalar.json", 100);
    const Campaign fl = prepare("scenarios/flight.json", 100);
    std::printf("acceptance: scalar design %.2f s (T = %d), batch %.2f s; flight design %.2f s (T = %d), batch %.2f s\n",
                sc.design_seconds, sc.design.artifacts.traj.length(), sc.batch_seconds, fl.design_seconds,
                fl.design.artifacts.traj.length(), fl.batch_seconds);
    criterion1(sc);
    criterion2(sc);
    criterion3(fl);
    criterion4(fl, sc);
    criterion5(fl, sc);
    criterion6(fl, sc);
    criterion7(fl, sc);
    criterion8();
    criterion9();
    criterion10(fl, sc);
  } catch (const std::exception& e) {
    std::cerr << "acceptance harness error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
