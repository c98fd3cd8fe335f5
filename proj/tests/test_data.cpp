#include "trddpc/data.hpp"
#include "trddpc/error.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <random>

using namespace trddpc;
using namespace trddpc::testing_util;

TEST(Data, HankelHandExample) {
  const Matrix seq = mat(1, 4, {1, 2, 3, 4});
  const Matrix H = block_hankel(seq, 2);
  EXPECT_TRUE(H.isApprox(mat(2, 3, {1, 2, 3, 2, 3, 4})));
  // Two-channel signal: each block row stacks both channels.
  const Matrix seq2 = mat(2, 3, {1, 2, 3, 10, 20, 30});
  const Matrix H2 = block_hankel(seq2, 2);
  EXPECT_TRUE(H2.isApprox(mat(4, 2, {1, 2, 10, 20, 2, 3, 20, 30})));
}

TEST(Data, HankelDepthTooLarge) {
  try {
    block_hankel(mat(1, 3, {1, 2, 3}), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDepthTooLarge);
  }
}

TEST(Data, PersistencyOfExcitation) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(-1, 1);
  Matrix u(1, 30);
  for (int t = 0; t < 30; ++t) u(0, t) = d(rng);
  EXPECT_TRUE(check_pe(u, 5).ok);
  EXPECT_EQ(check_pe(u, 5).rank, 5);
  const Matrix c = Matrix::Constant(1, 30, 0.7);
  const PeReport r = check_pe(c, 2);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.rank, 1);
  // 6 samples give only 3 columns at order 4.
  const PeReport s = check_pe(u.leftCols(6), 4);
  EXPECT_FALSE(s.ok);
  EXPECT_FALSE(s.reason.empty());
}

TEST(Data, CoefficientTrajectoriesObeyNoiseFreeDynamics) {
  const Matrix A = mat(2, 2, {1, 1, 0, 1});
  const Matrix B = mat(2, 1, {0.5, 1});
  const Matrix K = mat(1, 2, {-0.4, -1.0});
  const Trajectory tr = simulate_measured(A, B, vec({0.3, -0.2}), 40, 1.0, 0.0, 11);
  const HankelSystem hs = build_hankel(tr, 5);
  EXPECT_EQ(hs.L, 4);
  EXPECT_EQ(hs.columns(), 36);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> d(0, 1);
  SimplexCoefficient g;
  g.g.resize(hs.columns());
  for (int i = 0; i < hs.columns(); ++i) g.g(i) = d(rng);
  g.g /= g.g.sum();
  ASSERT_TRUE(g.valid());
  const auto [v, z] = trajectory_from_coefficient(hs, K, g);
  for (int ell = 0; ell < hs.L; ++ell) {
    const Vector u = v.col(ell) + K * z.col(ell);
    EXPECT_LT((z.col(ell + 1) - (A * z.col(ell) + B * u)).norm(), 1e-12);
  }
}

TEST(Data, UnitCoefficientRecoversDataSegment) {
  const Matrix A = mat(2, 2, {1, 1, 0, 1});
  const Matrix B = mat(2, 1, {0.5, 1});
  const Matrix K = mat(1, 2, {-0.4, -1.0});
  const Trajectory tr = simulate_measured(A, B, vec({0.3, -0.2}), 20, 1.0, 0.01, 2);
  const HankelSystem hs = build_hankel(tr, 4);
  SimplexCoefficient g;
  g.g = Vector::Zero(hs.columns());
  g.g(7) = 1.0;
  const auto [v, z] = trajectory_from_coefficient(hs, K, g);
  for (int ell = 0; ell <= hs.L; ++ell) {
    EXPECT_LT((z.col(ell) - tr.x_hat.col(7 + ell)).norm(), 1e-15);
    EXPECT_LT((v.col(ell) - (tr.u.col(7 + ell) - K * tr.x_hat.col(7 + ell))).norm(), 1e-15);
  }
  const auto [Hv, Hx] = closed_loop_hankel(hs, K);
  EXPECT_LT((Hv.col(7).segment(2, 1) - (tr.u.col(9) - K * tr.x_hat.col(9))).norm(), 1e-15);
  EXPECT_TRUE(Hx.isApprox(hs.H_x));
}

TEST(Data, SimplexValidity) {
  SimplexCoefficient g;
  g.g = vec({0.2, 0.3});
  g.theta = 0.5;
  EXPECT_TRUE(g.valid());
  g.g = vec({-0.1, 0.6});
  EXPECT_FALSE(g.valid());
}

TEST(Data, CsvRoundTripIsExact) {
  const Trajectory tr = simulate_measured(mat(2, 2, {1, 1, 0, 1}), mat(2, 1, {0.5, 1}), vec({1e-7, 3.3}), 25,
                                          1.0, 0.01, 9);
  const std::string path = ::testing::TempDir() + "traj_roundtrip.csv";
  write_trajectory_csv(path, tr);
  const Trajectory back = read_trajectory_csv(path);
  EXPECT_EQ(back.u, tr.u);
  EXPECT_EQ(back.x_hat, tr.x_hat);
  std::remove(path.c_str());
  try {
    read_trajectory_csv(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}
