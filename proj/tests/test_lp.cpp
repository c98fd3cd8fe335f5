#include "trddpc/lp.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace trddpc;

TEST(Lp, StandardFormKnownOptimum) {
  // min -x1 - x2  s.t. x1 + 2 x2 + s1 = 4, 3 x1 + x2 + s2 = 6 -> x = (1.6, 1.2)
  Matrix A(2, 4);
  A << 1, 2, 1, 0, 3, 1, 0, 1;
  Vector b(2);
  b << 4, 6;
  Vector c(4);
  c << -1, -1, 0, 0;
  const LpResult r = solve_standard_lp(A, b, c);
  ASSERT_EQ(r.status, LpStatus::kOptimal);
  EXPECT_NEAR(r.x(0), 1.6, 1e-12);
  EXPECT_NEAR(r.x(1), 1.2, 1e-12);
  EXPECT_NEAR(r.objective, -2.8, 1e-12);
  // Dual feasibility and strong duality.
  EXPECT_NEAR(b.dot(r.duals), r.objective, 1e-12);
  const Vector red = c - A.transpose() * r.duals;
  EXPECT_GE(red.minCoeff(), -1e-12);
}

TEST(Lp, DetectsInfeasibleAndReportsResidual) {
  Matrix A(2, 1);
  A << 1, 1;
  Vector b(2);
  b << 1, 2;
  const LpResult r = solve_standard_lp(A, b, Vector::Zero(1));
  EXPECT_EQ(r.status, LpStatus::kInfeasible);
  EXPECT_NEAR(r.phase1_residual, 1.0, 1e-12);
}

TEST(Lp, MaximizeOverBoxAndTriangle) {
  Matrix G(4, 2);
  G << 1, 0, -1, 0, 0, 1, 0, -1;
  Vector h = Vector::Ones(4);
  Vector d(2);
  d << 1, 1;
  LpMaxResult r = lp_maximize(G, h, d);
  ASSERT_EQ(r.status, LpStatus::kOptimal);
  EXPECT_NEAR(r.value, 2.0, 1e-12);
  EXPECT_NEAR(r.x(0), 1.0, 1e-12);
  // Triangle co{(0,0),(2,0),(0,1)}: x >= 0, y >= 0, x + 2y <= 2.
  Matrix T(3, 2);
  T << -1, 0, 0, -1, 1, 2;
  Vector ht(3);
  ht << 0, 0, 2;
  d << 1, 2;
  r = lp_maximize(T, ht, d);
  ASSERT_EQ(r.status, LpStatus::kOptimal);
  EXPECT_NEAR(r.value, 2.0, 1e-12);
}

TEST(Lp, UnboundedAndInfeasibleMaximize) {
  Matrix G(1, 2);
  G << 1, 0;
  Vector h(1);
  h << 1;
  Vector d(2);
  d << 0, 1;
  EXPECT_EQ(lp_maximize(G, h, d).status, LpStatus::kUnbounded);
  Matrix G2(2, 1);
  G2 << 1, -1;
  Vector h2(2);
  h2 << -1, -1;  // x <= -1 and x >= 1
  EXPECT_EQ(lp_maximize(G2, h2, Vector::Ones(1)).status, LpStatus::kInfeasible);
  EXPECT_FALSE(lp_feasible(G2, h2));
}

TEST(Lp, RandomPolytopesMatchVertexScan) {
  std::mt19937 rng(7);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    // Random polygon as the hull of points on a circle: H-rep from edges.
    const int k = 5 + trial % 6;
    std::vector<double> ang(k);
    std::uniform_real_distribution<double> ua(0, 2 * M_PI);
    for (auto& a : ang) a = ua(rng);
    std::sort(ang.begin(), ang.end());
    Matrix P(2, k);
    for (int i = 0; i < k; ++i) P.col(i) << std::cos(ang[i]), std::sin(ang[i]);
    Matrix G(k, 2);
    Vector h(k);
    for (int i = 0; i < k; ++i) {
      const Vector a = P.col(i);
      const Vector b = P.col((i + 1) % k);
      Vector nrm(2);
      nrm << b(1) - a(1), -(b(0) - a(0));
      G.row(i) = nrm.transpose();
      h(i) = nrm.dot(a);
    }
    // Skip nearly degenerate polygons whose hull misses the origin direction.
    bool bounded = true;
    for (int i = 0; i < k; ++i) {
      double gap = ang[(i + 1) % k] - ang[i];
      if (gap < 0) gap += 2 * M_PI;
      if (gap >= M_PI) bounded = false;
    }
    if (!bounded) continue;
    Vector d(2);
    d << n01(rng), n01(rng);
    const LpMaxResult r = lp_maximize(G, h, d);
    ASSERT_EQ(r.status, LpStatus::kOptimal);
    EXPECT_NEAR(r.value, (d.transpose() * P).maxCoeff(), 1e-9);
  }
}
