#include "trddpc/controller.hpp"
#include "trddpc/error.hpp"
#include "trddpc/simulation.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace trddpc;
using namespace trddpc::testing_util;

namespace {

// Scalar plant x+ = 1.1 x + 0.5 u, |x|, |u| <= 2, L = 8.
Scenario scalar_scenario(double w) {
  nlohmann::json j = {
      {"name", "scalar-test"}, {"A", {{1.1}}}, {"B", {{0.5}}}, {"X", {{"box", {2.0}}}}, {"U", {{"box", {2.0}}}},
      {"W", {{"box", {w}}}},   {"Q", {{1.0}}}, {"R", {{0.1}}}, {"L", 8},                {"T", 100},
      {"x0", {-1.0}},          {"data_x0", {0.0}}, {"steps", 20}, {"seeds", {1, 2, 3}},
      {"data", {{"T_loc", 64}, {"T_pre2", 20}, {"prefix_amplitude", 2.0}}}};
  return Scenario::from_json(j);
}

const DesignArtifacts& noisy_artifacts() {
  static const DesignArtifacts art = design_pipeline(scalar_scenario(1e-4)).artifacts;
  return art;
}

const DesignArtifacts& clean_artifacts() {
  static const DesignArtifacts art = design_pipeline(scalar_scenario(0.0)).artifacts;
  return art;
}

// Builds a strictly convex QP with a prescribed KKT point: x*, active
// inequalities with positive multipliers, inactive ones with positive slack.
struct PlantedQp {
  QpProblem qp;
  Vector x_star;
};

PlantedQp planted_qp(int n, int me, int mi, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.5, 2.0);
  Matrix M(n, n);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = nd(rng);
  const Matrix P = M * M.transpose() + Matrix::Identity(n, n);
  Matrix A(me, n), G(mi, n);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
  for (Eigen::Index i = 0; i < G.size(); ++i) G.data()[i] = nd(rng);
  Vector x(n);
  for (int i = 0; i < n; ++i) x(i) = nd(rng);
  Vector y(me), z = Vector::Zero(mi), h(mi);
  for (int i = 0; i < me; ++i) y(i) = nd(rng);
  for (int i = 0; i < mi; ++i) {
    const bool active = i % 2 == 0;
    z(i) = active ? ud(rng) : 0.0;
    h(i) = G.row(i).dot(x) + (active ? 0.0 : ud(rng));
  }
  const Vector q = -(P * x + A.transpose() * y + G.transpose() * z);
  return {QpProblem::from_dense(P, q, A, A * x, G, h), x};
}

}  // namespace

TEST(Qp, RecoversPlantedKktPoint) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 6;
    const PlantedQp pq = planted_qp(n, trial % 3, 2 * n, rng);
    const QpResult r = solve_qp(pq.qp);
    ASSERT_EQ(r.status, QpStatus::kOptimal) << "trial " << trial;
    EXPECT_LE((r.x - pq.x_star).cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial;
  }
}

TEST(Qp, WarmStartReachesSameOptimum) {
  std::mt19937_64 rng(8);
  const PlantedQp pq = planted_qp(6, 2, 12, rng);
  const Vector x0 = Vector::Constant(6, 5.0);
  const QpResult r = solve_qp(pq.qp, {}, &x0);
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  EXPECT_LE((r.x - pq.x_star).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Qp, BoxProjectionClosedForm) {
  // min 0.5 |x - c|^2 over the unit box: x = clip(c).
  const Vector c = vec({2.0, -0.3, -5.0});
  Matrix G(6, 3);
  G << Matrix::Identity(3, 3), -Matrix::Identity(3, 3);
  const QpResult r =
      solve_qp(QpProblem::from_dense(Matrix::Identity(3, 3), -c, Matrix(0, 3), Vector(0), G, Vector::Ones(6)));
  ASSERT_EQ(r.status, QpStatus::kOptimal);
  EXPECT_NEAR(r.x(0), 1.0, 1e-7);
  EXPECT_NEAR(r.x(1), -0.3, 1e-7);
  EXPECT_NEAR(r.x(2), -1.0, 1e-7);
}

TEST(Qp, DetectsInfeasibleConstraints) {
  // x <= -1 and -x <= -1.
  const QpResult r = solve_qp(QpProblem::from_dense(Matrix::Identity(1, 1), Vector::Zero(1), Matrix(0, 1), Vector(0),
                                                    mat(2, 1, {1, -1}), vec({-1, -1})));
  EXPECT_EQ(r.status, QpStatus::kInfeasible);
}

TEST(Qp, RejectsMismatchedDimensions) {
  try {
    solve_qp(QpProblem::from_dense(Matrix::Identity(2, 2), Vector::Zero(3), Matrix(0, 2), Vector(0), Matrix(0, 2),
                                   Vector(0)));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Controller, DecisionVectorLayout) {
  const DesignArtifacts& art = clean_artifacts();
  const AssembledQp aq = assemble_qp(art, vec({0.0}));
  const int N = art.traj.length() - art.L();
  EXPECT_EQ(aq.layout.N, N);
  EXPECT_EQ(aq.layout.num_vars(), 1 * (8 + 1) + 1 * 8 + N);
  EXPECT_EQ(aq.qp.num_vars(), aq.layout.num_vars());
  std::vector<std::string> names;
  for (const auto& g : aq.layout.groups) names.push_back(g.name);
  EXPECT_EQ(names, (std::vector<std::string>{"anchor", "state", "input", "terminal", "simplex"}));
}

TEST(Controller, RejectsSingularInputWeight) {
  DesignArtifacts art = clean_artifacts();
  art.inputs.R = Matrix::Zero(1, 1);
  try {
    assemble_qp(art, vec({0.0}));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(Controller, EquilibriumStaysAtRest) {
  const DesignArtifacts& art = clean_artifacts();
  const OcpSolution sol = solve_ocp(art, vec({0.0}));
  ASSERT_TRUE(sol.feasible);
  EXPECT_NEAR(sol.objective, 0.0, 1e-8);
  EXPECT_LE(sol.Z.cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_NEAR(control_input(art, sol, vec({0.0}))(0), 0.0, 1e-5);
  EXPECT_TRUE(sol.g.valid(1e-9));
}

TEST(Controller, MeasurementOutsideStateSetIsInfeasible) {
  const OcpSolution sol = solve_ocp(noisy_artifacts(), vec({10.0}));
  EXPECT_FALSE(sol.feasible);
  EXPECT_EQ(sol.status, QpStatus::kInfeasible);
}

TEST(Controller, PlanIsRealizedByCoefficient) {
  const DesignArtifacts& art = noisy_artifacts();
  const Vector xh = vec({-1.0});
  const OcpSolution sol = solve_ocp(art, xh);
  ASSERT_TRUE(sol.feasible);
  EXPECT_TRUE(sol.g.valid(1e-9));
  EXPECT_LE(sol.hankel_residual, 1e-9);
  // The plan is the image of g under the Hankel blocks.
  for (int l = 0; l <= art.L(); ++l) {
    EXPECT_NEAR(sol.Z(0, l), (art.hankel.x_block(l) * sol.g.g)(0), 1e-9);
  }
  EXPECT_GE(sol.margins.min(), -1e-7);
  // Cost agrees with an independent evaluation of the stage and terminal terms.
  const Matrix& Q = art.inputs.Q;
  const Matrix& R = art.inputs.R;
  double cost = 0.0;
  for (int l = 0; l < art.L(); ++l) {
    const Vector u = sol.V.col(l) + art.K() * sol.Z.col(l);
    cost += sol.Z.col(l).dot(Q * sol.Z.col(l)) + u.dot(R * u);
  }
  cost += sol.Z.col(art.L()).dot(art.weight.P_L * sol.Z.col(art.L()));
  EXPECT_NEAR(sol.objective, cost, 1e-9 * (1.0 + cost));
}

TEST(Controller, TieBreakKeepsOptimumAndShrinksCoefficient) {
  const DesignArtifacts& art = noisy_artifacts();
  const Vector xh = vec({-0.5});
  ControllerOptions plain;
  ControllerOptions tb;
  tb.tie_break_g = true;
  const OcpSolution a = solve_ocp(art, xh, plain);
  const OcpSolution b = solve_ocp(art, xh, tb);
  ASSERT_TRUE(a.feasible && b.feasible);
  EXPECT_NEAR(a.objective, b.objective, 1e-6 * (1.0 + a.objective));
  EXPECT_LE(b.g.g.squaredNorm(), a.g.g.squaredNorm() + 1e-9);
  // Deterministic: a second solve reproduces the coefficient bit for bit.
  const OcpSolution c = solve_ocp(art, xh, tb);
  EXPECT_EQ(b.g.g, c.g.g);
}

TEST(Controller, ShiftCoefficientByHand) {
  SimplexCoefficient g;
  g.g = vec({0.1, 0.2, 0.3, 0.4});
  CoverageCertificate h;
  h.h.g = vec({0.5, 0.0, 0.5, 0.0});
  const SimplexCoefficient s = shift_coefficient(g, h);
  // (0, 0.1, 0.2, 0.3) + 0.4 * (0.5, 0, 0.5, 0)
  EXPECT_NEAR(s.g(0), 0.2, 1e-15);
  EXPECT_NEAR(s.g(1), 0.1, 1e-15);
  EXPECT_NEAR(s.g(2), 0.4, 1e-15);
  EXPECT_NEAR(s.g(3), 0.3, 1e-15);
  EXPECT_NEAR(s.g.sum(), 1.0, 1e-15);
  h.h.g = vec({1.0, 0.0});
  EXPECT_THROW(shift_coefficient(g, h), Error);
}

TEST(Controller, ShiftCandidatePassesAllItems) {
  const DesignArtifacts& art = noisy_artifacts();
  const Scenario s = scalar_scenario(1e-4);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> w(-1e-4, 1e-4);
  double x = -1.0;
  Vector xh = vec({x + w(rng)});
  OcpSolution sol = solve_ocp(art, xh);
  ASSERT_TRUE(sol.feasible);
  for (int k = 0; k < 5; ++k) {
    const double u = control_input(art, sol, xh)(0);
    x = 1.1 * x + 0.5 * u;
    const Vector next = vec({x + w(rng)});
    const ShiftReport rep = shift_candidate(art, sol, next);
    EXPECT_TRUE(rep.stage) << "k=" << k;
    EXPECT_TRUE(rep.initial) << "k=" << k;
    EXPECT_TRUE(rep.terminal) << "k=" << k;
    EXPECT_TRUE(rep.realizable) << "k=" << k;
    sol = solve_ocp(art, next, {}, &rep.g);
    ASSERT_TRUE(sol.feasible);
    // Optimality: never worse than the certified candidate.
    EXPECT_LE(sol.objective, rep.cost + 1e-7);
    xh = next;
  }
}
