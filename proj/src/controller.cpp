#include "trddpc/controller.hpp"

#include "trddpc/error.hpp"
#include "trddpc/lp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace trddpc {

namespace {

// Row-block builder for the stacked sparse constraint matrices.
struct RowStack {
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int rows = 0;
  // Appends rows with right-hand side h and returns the first row index.
  int add_rows(const Vector& h) {
    const int r0 = rows;
    rhs.insert(rhs.end(), h.data(), h.data() + h.size());
    rows += static_cast<int>(h.size());
    return r0;
  }
  void put(int r0, int c0, const Matrix& blk) {
    for (Eigen::Index j = 0; j < blk.cols(); ++j) {
      for (Eigen::Index i = 0; i < blk.rows(); ++i) {
        if (blk(i, j) != 0.0) trip.emplace_back(r0 + static_cast<int>(i), c0 + static_cast<int>(j), blk(i, j));
      }
    }
  }
  void add(const Matrix& G, const Vector& h) { put(add_rows(h), 0, G); }
  void finish(int cols, SparseMatrix& G, Vector& h) const {
    G.resize(rows, cols);
    G.setFromTriplets(trip.begin(), trip.end());
    h = Eigen::Map<const Vector>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  }
};

// Feasibility of the OCP decided by an LP in g alone: z and v are
// eliminated through the Hankel coupling y = [T; I] g, the simplex rows
// become the sign constraints of g, and every other inequality gets a slack.
bool feasible_in_g(const AssembledQp& aq, const Matrix& T) {
  const QpLayout& lay = aq.layout;
  const int go = lay.g_offset(), N = lay.N;
  int sb = 0, se = 0;
  for (const auto& grp : lay.groups) {
    if (grp.name == "simplex") {
      sb = grp.begin;
      se = grp.end;
    }
  }
  const SparseMatrix& G = aq.qp.G;
  const SparseMatrix& A = aq.qp.A;
  const Matrix Cg = Matrix(G.leftCols(go)) * T + Matrix(G.rightCols(N));
  const Matrix Ce = Matrix(A.leftCols(go)) * T + Matrix(A.rightCols(N));
  const int rin = static_cast<int>(G.rows()) - (se - sb);
  const int req = static_cast<int>(A.rows()) - go;  // the first go rows are the coupling itself
  Matrix M = Matrix::Zero(rin + req, N + rin);
  Vector d(rin + req);
  int r = 0;
  for (int i = 0; i < G.rows(); ++i) {
    if (i >= sb && i < se) continue;
    M.row(r).head(N) = Cg.row(i);
    M(r, N + r) = 1.0;
    d(r) = aq.qp.h(i);
    ++r;
  }
  for (int i = go; i < A.rows(); ++i, ++r) {
    M.row(r).head(N) = Ce.row(i);
    d(r) = aq.qp.b(i);
  }
  const LpResult lp = solve_standard_lp(M, d, Vector::Zero(N + rin));
  return lp.status == LpStatus::kOptimal;
}

double neg_inf_if_empty(const Polytope& P, const Vector& x) {
  return P.is_empty() ? -std::numeric_limits<double>::infinity() : P.point_margin(x);
}

}  // namespace

SplitRows split_rows(const Polytope& P) {
  const Matrix& G = P.G();
  const Vector& h = P.h();
  const Eigen::Index r = G.rows();
  std::vector<int> role(static_cast<std::size_t>(r), 0);  // 0 ineq, 1 eq (kept), 2 dropped twin
  for (Eigen::Index i = 0; i < r; ++i) {
    if (role[static_cast<std::size_t>(i)] != 0) continue;
    for (Eigen::Index j = i + 1; j < r; ++j) {
      if (role[static_cast<std::size_t>(j)] != 0) continue;
      if ((G.row(i) + G.row(j)).cwiseAbs().maxCoeff() < 1e-12 && std::abs(h(i) + h(j)) < 1e-12) {
        role[static_cast<std::size_t>(i)] = 1;
        role[static_cast<std::size_t>(j)] = 2;
        break;
      }
    }
  }
  SplitRows s;
  const auto count = [&](int k) { return static_cast<Eigen::Index>(std::count(role.begin(), role.end(), k)); };
  s.G_in.resize(count(0), G.cols());
  s.h_in.resize(count(0));
  s.G_eq.resize(count(1), G.cols());
  s.h_eq.resize(count(1));
  Eigen::Index a = 0, b = 0;
  for (Eigen::Index i = 0; i < r; ++i) {
    const int k = role[static_cast<std::size_t>(i)];
    if (k == 0) {
      s.G_in.row(a) = G.row(i);
      s.h_in(a++) = h(i);
    } else if (k == 1) {
      s.G_eq.row(b) = G.row(i);
      s.h_eq(b++) = h(i);
    }
  }
  return s;
}

double GroupMargins::min() const { return std::min({anchor, state, input, terminal, simplex}); }

nlohmann::json GroupMargins::to_json() const {
  return {{"anchor", anchor}, {"state", state}, {"input", input}, {"terminal", terminal}, {"simplex", simplex}};
}

AssembledQp assemble_qp(const DesignArtifacts& art, const Vector& x_hat) {
  const HankelSystem& hs = art.hankel;
  const int n = hs.n, m = hs.m, L = hs.L, N = hs.columns();
  const Matrix& K = art.K();
  const Matrix& Q = art.inputs.Q;
  const Matrix& R = art.inputs.R;
  const Matrix& PL = art.weight.P_L;
  if (x_hat.size() != n || K.rows() != m || K.cols() != n || Q.rows() != n || R.rows() != m || PL.rows() != n) {
    throw Error(ErrorCode::kDimensionMismatch, "OCP data dimensions");
  }
  if (min_eig(R) <= 0.0) throw Error(ErrorCode::kInvalidArgument, "input weight R must be positive definite");
  for (const Polytope* P : {&art.tube.E, &art.tube.Z, &art.tube.U_hat, &art.terminal.Z_f}) {
    if (P->is_empty()) throw Error(ErrorCode::kEmptySet, "OCP constraint set is empty");
  }
  AssembledQp aq;
  QpLayout& lay = aq.layout;
  lay.n = n;
  lay.m = m;
  lay.L = L;
  lay.N = N;
  const int nv = lay.num_vars();
  const int zo = lay.z_offset(), vo = lay.v_offset(), go = lay.g_offset();

  // Cost 0.5 y'Py: stage l contributes z'Qz + (v + K z)'R(v + K z).
  QpProblem& qp = aq.qp;
  qp.q = Vector::Zero(nv);
  {
    const Matrix KtR = K.transpose() * R;
    RowStack cost;
    cost.rows = nv;
    for (int l = 0; l < L; ++l) {
      const int zi = zo + l * n, vi = vo + l * m;
      cost.put(zi, zi, 2.0 * (Q + KtR * K));
      cost.put(zi, vi, 2.0 * KtR);
      cost.put(vi, zi, 2.0 * KtR.transpose());
      cost.put(vi, vi, 2.0 * R);
    }
    cost.put(zo + L * n, zo + L * n, PL + PL.transpose());
    qp.P.resize(nv, nv);
    qp.P.setFromTriplets(cost.trip.begin(), cost.trip.end());
  }

  // Equalities: Hankel coupling, simplex sum, implicit equalities of the sets.
  RowStack eq;
  for (int l = 0; l <= L; ++l) {
    const int r0 = eq.add_rows(Vector::Zero(n));
    eq.put(r0, zo + l * n, Matrix::Identity(n, n));
    eq.put(r0, go, -hs.x_block(l));
  }
  for (int l = 0; l < L; ++l) {
    const int r0 = eq.add_rows(Vector::Zero(m));
    eq.put(r0, vo + l * m, Matrix::Identity(m, m));
    eq.put(r0, go, -(hs.u_block(l) - K * hs.x_block(l)));
  }
  eq.put(eq.add_rows(Vector::Constant(1, art.inputs.theta)), go, Matrix::Ones(1, N));

  RowStack in;
  auto add_group = [&](const std::string& name, const Polytope& P, const std::vector<std::pair<Matrix, Vector>>& maps) {
    // Each entry maps y to a point of P: (selector S, shift c) meaning S y + c in P.
    const SplitRows s = split_rows(P);
    ConstraintGroup grp{name, in.rows, in.rows};
    for (const auto& [S, c] : maps) {
      if (s.G_in.rows() > 0) in.add(s.G_in * S, s.h_in - s.G_in * c);
      if (s.G_eq.rows() > 0) eq.add(s.G_eq * S, s.h_eq - s.G_eq * c);
    }
    grp.end = in.rows;
    lay.groups.push_back(grp);
  };
  auto select_z = [&](int l) {
    Matrix S = Matrix::Zero(n, nv);
    S.block(0, zo + l * n, n, n) = Matrix::Identity(n, n);
    return S;
  };
  // Anchoring: z_0 - x_hat in E (shift applied in update_measurement).
  {
    const SplitRows s = split_rows(art.tube.E);
    aq.G_E = s.G_in;
    aq.h_E = s.h_in;
    aq.G_E_eq = s.G_eq;
    aq.h_E_eq = s.h_eq;
    aq.anchor_row = in.rows;
    aq.anchor_eq_row = eq.rows;
    ConstraintGroup grp{"anchor", in.rows, in.rows};
    if (s.G_in.rows() > 0) in.add(s.G_in * select_z(0), s.h_in);
    if (s.G_eq.rows() > 0) eq.add(s.G_eq * select_z(0), s.h_eq);
    grp.end = in.rows;
    lay.groups.push_back(grp);
  }
  {
    std::vector<std::pair<Matrix, Vector>> maps;
    for (int l = 1; l <= L; ++l) maps.emplace_back(select_z(l), Vector::Zero(n));
    add_group("state", art.tube.Z, maps);
  }
  {
    std::vector<std::pair<Matrix, Vector>> maps;
    for (int l = 0; l < L; ++l) {
      Matrix S = Matrix::Zero(m, nv);
      S.block(0, vo + l * m, m, m) = Matrix::Identity(m, m);
      S.block(0, zo + l * n, m, n) = K;
      maps.emplace_back(S, Vector::Zero(m));
    }
    add_group("input", art.tube.U_hat, maps);
  }
  add_group("terminal", art.terminal.Z_f, {{select_z(L), Vector::Zero(n)}});
  {
    ConstraintGroup grp{"simplex", in.rows, in.rows};
    const int r0 = in.add_rows(Vector::Zero(N));
    for (int i = 0; i < N; ++i) in.trip.emplace_back(r0 + i, go + i, -1.0);
    grp.end = in.rows;
    lay.groups.push_back(grp);
  }
  eq.finish(nv, qp.A, qp.b);
  in.finish(nv, qp.G, qp.h);
  update_measurement(aq, x_hat);
  return aq;
}

void update_measurement(AssembledQp& aq, const Vector& x_hat) {
  if (aq.h_E.size() > 0) aq.qp.h.segment(aq.anchor_row, aq.h_E.size()) = aq.h_E + aq.G_E * x_hat;
  if (aq.h_E_eq.size() > 0) aq.qp.b.segment(aq.anchor_eq_row, aq.h_E_eq.size()) = aq.h_E_eq + aq.G_E_eq * x_hat;
}

double plan_cost(const DesignArtifacts& art, const Matrix& Z, const Matrix& V) {
  const Matrix& Q = art.inputs.Q;
  const Matrix& R = art.inputs.R;
  const Matrix& K = art.K();
  const int L = static_cast<int>(V.cols());
  double J = 0.0;
  for (int l = 0; l < L; ++l) {
    const Vector z = Z.col(l);
    const Vector u = V.col(l) + K * z;
    J += z.dot(Q * z) + u.dot(R * u);
  }
  const Vector zL = Z.col(L);
  return J + zL.dot(art.weight.P_L * zL);
}

GroupMargins plan_margins(const DesignArtifacts& art, const Matrix& Z, const Matrix& V, const SimplexCoefficient& g,
                          const Vector& x_hat) {
  GroupMargins mg;
  const int L = static_cast<int>(V.cols());
  mg.anchor = neg_inf_if_empty(art.tube.E, Z.col(0) - x_hat);
  mg.state = std::numeric_limits<double>::infinity();
  mg.input = std::numeric_limits<double>::infinity();
  for (int l = 1; l <= L; ++l) mg.state = std::min(mg.state, neg_inf_if_empty(art.tube.Z, Z.col(l)));
  for (int l = 0; l < L; ++l) {
    mg.input = std::min(mg.input, neg_inf_if_empty(art.tube.U_hat, V.col(l) + art.K() * Z.col(l)));
  }
  mg.terminal = neg_inf_if_empty(art.terminal.Z_f, Z.col(L));
  const double sum_error = std::abs(g.g.sum() - g.theta);
  mg.simplex = sum_error <= 1e-12 * std::max(1.0, g.theta) ? g.g.minCoeff() : -sum_error;
  return mg;
}

Controller::Controller(const DesignArtifacts& art, ControllerOptions opts)
    : art_(art), opts_(opts), aq_(assemble_qp(art, Vector::Zero(art.n()))) {}

OcpSolution Controller::solve(const Vector& x_hat, const SimplexCoefficient* warm) {
  const auto t0 = std::chrono::steady_clock::now();
  update_measurement(aq_, x_hat);
  const HankelSystem& hs = art_.hankel;
  const QpLayout& lay = aq_.layout;
  const double theta = art_.inputs.theta;

  auto stack_from_g = [&](const Vector& g) {
    Vector y(lay.num_vars());
    for (int l = 0; l <= lay.L; ++l) y.segment(lay.z_offset() + l * lay.n, lay.n) = hs.x_block(l) * g;
    for (int l = 0; l < lay.L; ++l) {
      y.segment(lay.v_offset() + l * lay.m, lay.m) = (hs.u_block(l) - art_.K() * hs.x_block(l)) * g;
    }
    y.segment(lay.g_offset(), lay.N) = g;
    return y;
  };

  QpResult r;
  Vector y0;
  const bool use_warm = opts_.warm_start && warm != nullptr && warm->g.size() == lay.N;
  if (use_warm) {
    y0 = stack_from_g(warm->g);
    r = solve_qp(aq_.qp, opts_.qp, &y0);
  }
  if (!use_warm || r.status != QpStatus::kOptimal) r = solve_qp(aq_.qp, opts_.qp);

  OcpSolution sol;
  sol.iterations = r.iterations;
  if (r.status != QpStatus::kOptimal && r.status != QpStatus::kInfeasible) {
    const bool acceptable = r.primal_residual <= 1e-6 && r.dual_residual <= 1e-6 && r.mu <= 1e-6;
    if (acceptable) {
      r.status = QpStatus::kOptimal;
    } else {
      // Large problems skip the generic phase-1 classification; decide
      // feasibility in the reduced g-space instead.
      Matrix T(lay.g_offset(), lay.N);
      for (int l = 0; l <= lay.L; ++l) T.middleRows(l * lay.n, lay.n) = hs.x_block(l);
      for (int l = 0; l < lay.L; ++l) {
        T.middleRows(lay.v_offset() + l * lay.m, lay.m) = hs.u_block(l) - art_.K() * hs.x_block(l);
      }
      if (!feasible_in_g(aq_, T)) {
        r.status = QpStatus::kInfeasible;
      } else {
        throw Error(ErrorCode::kSolverFailure,
                    std::string("OCP solver stopped with status ") + to_string(r.status) +
                        " (primal residual " + std::to_string(r.primal_residual) + ", dual residual " +
                        std::to_string(r.dual_residual) + ", mu " + std::to_string(r.mu) + ")");
      }
    }
  }
  sol.status = r.status;
  if (r.status == QpStatus::kInfeasible) {
    sol.feasible = false;
    sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sol;
  }
  Vector g = r.x.segment(lay.g_offset(), lay.N);

  if (opts_.tie_break_g) {
    // Least-norm coefficient reproducing the optimal (Z, V).
    const Vector zv = r.x.head(lay.g_offset());
    QpProblem tb;
    Matrix A(lay.g_offset() + 1, lay.N);
    for (int l = 0; l <= lay.L; ++l) A.middleRows(l * lay.n, lay.n) = hs.x_block(l);
    for (int l = 0; l < lay.L; ++l) {
      A.middleRows(lay.v_offset() + l * lay.m, lay.m) = hs.u_block(l) - art_.K() * hs.x_block(l);
    }
    A.row(lay.g_offset()).setOnes();
    tb.A = A.sparseView();
    tb.b = Vector(lay.g_offset() + 1);
    tb.b << zv, theta;
    tb.P.resize(lay.N, lay.N);
    tb.P.setIdentity();
    tb.q = Vector::Zero(lay.N);
    tb.G.resize(lay.N, lay.N);
    tb.G.setIdentity();
    tb.G *= -1.0;
    tb.h = Vector::Zero(lay.N);
    QpOptions o = opts_.qp;
    o.classify_failure = false;
    const QpResult rt = solve_qp(tb, o, &g);
    if (rt.status == QpStatus::kOptimal) g = rt.x;
  }

  // Project onto the scaled simplex and regenerate (Z, V) from g so that the
  // Hankel equality holds to rounding error.
  g = g.cwiseMax(0.0);
  g *= theta / g.sum();
  const Vector y = stack_from_g(g);
  sol.g.g = g;
  sol.g.theta = theta;
  sol.Z = Eigen::Map<const Matrix>(y.data() + lay.z_offset(), lay.n, lay.L + 1);
  sol.V = Eigen::Map<const Matrix>(y.data() + lay.v_offset(), lay.m, lay.L);
  sol.hankel_residual = (aq_.qp.A * y).head(lay.g_offset()).cwiseAbs().maxCoeff();
  sol.objective = plan_cost(art_, sol.Z, sol.V);
  sol.margins = plan_margins(art_, sol.Z, sol.V, sol.g, x_hat);
  sol.feasible = true;
  sol.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

OcpSolution solve_ocp(const DesignArtifacts& art, const Vector& x_hat, const ControllerOptions& opts,
                      const SimplexCoefficient* warm) {
  Controller c(art, opts);
  return c.solve(x_hat, warm);
}

Vector control_input(const DesignArtifacts& art, const OcpSolution& sol, const Vector& x_hat) {
  return sol.V.col(0) + art.K() * x_hat;
}

SimplexCoefficient shift_coefficient(const SimplexCoefficient& g_star, const CoverageCertificate& h) {
  const Eigen::Index N = g_star.g.size();
  if (h.h.g.size() != N) throw Error(ErrorCode::kDimensionMismatch, "coverage certificate length");
  SimplexCoefficient out;
  out.theta = g_star.theta;
  out.g = Vector::Zero(N);
  out.g.tail(N - 1) = g_star.g.head(N - 1);
  out.g += g_star.g(N - 1) * h.h.g;
  return out;
}

ShiftReport shift_candidate(const DesignArtifacts& art, const OcpSolution& sol_k, const Vector& x_hat_next,
                            double tol) {
  const HankelSystem& hs = art.hankel;
  const int n = hs.n, m = hs.m, L = hs.L;
  const Matrix& K = art.K();
  ShiftReport rep;
  rep.g = shift_coefficient(sol_k.g, art.coverage);
  rep.Z.resize(n, L + 1);
  rep.V.resize(m, L);
  // Shifted optimal plan with the appended local action.
  for (int l = 0; l < L; ++l) rep.Z.col(l) = sol_k.Z.col(l + 1);
  for (int l = 0; l + 1 < L; ++l) rep.V.col(l) = sol_k.V.col(l + 1);
  rep.V.col(L - 1) = (hs.u_block(L) - K * hs.x_block(L)) * sol_k.g.g;
  rep.Z.col(L) = hs.x_block(L) * rep.g.g;
  // Realizability: the candidate must be generated by g+.
  double res = 0.0;
  for (int l = 0; l <= L; ++l) res = std::max(res, (rep.Z.col(l) - hs.x_block(l) * rep.g.g).cwiseAbs().maxCoeff());
  for (int l = 0; l < L; ++l) {
    res = std::max(res, (rep.V.col(l) - (hs.u_block(l) - K * hs.x_block(l)) * rep.g.g).cwiseAbs().maxCoeff());
  }
  rep.hankel_residual = res;
  rep.margins = plan_margins(art, rep.Z, rep.V, rep.g, x_hat_next);
  rep.cost = plan_cost(art, rep.Z, rep.V);
  const double scale = 1.0 + rep.Z.cwiseAbs().maxCoeff() + rep.V.cwiseAbs().maxCoeff();
  rep.realizable = res <= 1e-9 * scale && rep.g.valid(1e-12 * std::max(1.0, rep.g.theta));
  rep.stage = rep.margins.state >= -tol && rep.margins.input >= -tol;
  rep.initial = rep.margins.anchor >= -tol;
  rep.terminal = rep.margins.terminal >= -tol;
  return rep;
}

}  // namespace trddpc
