#include "trddpc/error.hpp"
#include "trddpc/polytope.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace trddpc;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Polytope random_polygon(std::mt19937& rng, int count, double scale) {
  std::normal_distribution<double> n01;
  Matrix P(2, count);
  for (int j = 0; j < count; ++j) P.col(j) << scale * n01(rng), scale * n01(rng);
  return Polytope::from_points(P);
}

}  // namespace

TEST(Geometry, SupportExamples) {
  const Polytope box = Polytope::symmetric_box(vec({1, 1}));
  EXPECT_NEAR(box.support(vec({1, 0})), 1.0, 1e-12);
  EXPECT_NEAR(box.support(vec({1, 1})), 2.0, 1e-12);
  Matrix T(2, 3);
  T << 0, 2, 0, 0, 0, 1;
  const Polytope tri = Polytope::from_points(T);
  // Hand enumeration of <(1,2), v>: 0, 2, 2.
  EXPECT_NEAR(tri.support(vec({1, 2})), 2.0, 1e-12);
  EXPECT_NEAR(tri.support_vertices(vec({1, 2})), 2.0, 1e-12);
}

TEST(Geometry, SupportOfEmptyAndUnboundedErrors) {
  try {
    Polytope::empty(2).support(vec({1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleSet);
  }
  Matrix G(1, 2);
  G << 1, 0;
  try {
    Polytope::from_halfspaces(G, vec({1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnbounded);
  }
}

TEST(Geometry, MinkowskiExamples) {
  const Polytope a = Polytope::symmetric_box(vec({1}));
  const Polytope b = Polytope::symmetric_box(vec({2}));
  const Polytope s = minkowski_sum(a, b);
  EXPECT_NEAR(s.support(vec({1})), 3.0, 1e-12);
  EXPECT_NEAR(s.support(vec({-1})), 3.0, 1e-12);
  const Polytope box = Polytope::symmetric_box(vec({1, 1}));
  const Polytope same = minkowski_sum(box, Polytope::zero(2));
  EXPECT_TRUE(contains(same, box).contained);
  EXPECT_TRUE(contains(box, same).contained);
  Matrix D(2, 4);
  D << 1, -1, 0, 0, 0, 0, 1, -1;
  const Polytope diamond = Polytope::from_points(D);
  const Polytope oct = minkowski_sum(box, diamond);
  EXPECT_EQ(oct.num_vertices(), 8);
  std::mt19937 rng(1);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 16; ++k) {
    const Vector d = vec({n01(rng), n01(rng)});
    EXPECT_NEAR(oct.support(d), box.support(d) + diamond.support(d), 1e-9);
  }
}

TEST(Geometry, PontryaginExamples) {
  const Polytope X = Polytope::symmetric_box(vec({2, 2}));
  const Polytope W = Polytope::symmetric_box(vec({0.01, 0.01}));
  const Polytope d = pontryagin_diff(X, W);
  EXPECT_FALSE(d.is_empty());
  EXPECT_NEAR(d.support(vec({1, 0})), 1.99, 1e-12);
  EXPECT_NEAR(d.support(vec({0, -1})), 1.99, 1e-12);
  const Polytope same = pontryagin_diff(X, Polytope::zero(2));
  EXPECT_TRUE(contains(same, X).contained && contains(X, same).contained);
  const Polytope none = pontryagin_diff(Polytope::symmetric_box(vec({1})), Polytope::symmetric_box(vec({2})));
  EXPECT_TRUE(none.is_empty());
  const Polytope point = pontryagin_diff(Polytope::symmetric_box(vec({1, 1})), Polytope::symmetric_box(vec({1, 1})));
  ASSERT_FALSE(point.is_empty());
  EXPECT_EQ(point.affine_dim(), 0);
  EXPECT_NEAR(point.radius(), 0.0, 1e-9);
}

TEST(Geometry, LinearImageExamples) {
  const Polytope box = Polytope::symmetric_box(vec({1, 1}));
  const Polytope same = linear_image(Matrix::Identity(2, 2), box);
  EXPECT_TRUE(contains(same, box).contained && contains(box, same).contained);
  const Polytope zero = linear_image(Matrix::Zero(2, 2), box);
  EXPECT_EQ(zero.affine_dim(), 0);
  Matrix M(2, 2);
  M << 1, 1, 0, 1;
  const Polytope img = linear_image(M, box);
  // Explicit 4-vertex map: (±2, ±1) and (0, ±1).
  Matrix expect(2, 4);
  expect << 2, -2, 0, 0, 1, -1, 1, -1;
  const Polytope oracle = Polytope::from_points(expect);
  EXPECT_TRUE(contains(img, oracle).contained && contains(oracle, img).contained);
  EXPECT_EQ(img.num_vertices(), 4);
}

TEST(Geometry, DegenerateImageIsSegmentWithEqualities) {
  const Polytope box = Polytope::symmetric_box(vec({1, 1}));
  Matrix K(2, 2);
  K << 1, 1, 1, 1;
  const Polytope seg = linear_image(K, box);
  EXPECT_EQ(seg.affine_dim(), 1);
  EXPECT_EQ(seg.num_vertices(), 2);
  EXPECT_TRUE(seg.contains_point(vec({1, 1})));
  EXPECT_FALSE(seg.contains_point(vec({1, 0.9}), 1e-6));
}

TEST(Geometry, HullUnionExamples) {
  const Polytope box = Polytope::symmetric_box(vec({1, 1}));
  const Polytope h1 = convex_hull_union({box});
  EXPECT_TRUE(contains(h1, box).contained && contains(box, h1).contained);
  const Polytope seg = convex_hull_union({Polytope::box(vec({-1}), vec({0})), Polytope::box(vec({0}), vec({1}))});
  EXPECT_NEAR(seg.support(vec({1})), 1.0, 1e-12);
  EXPECT_NEAR(seg.support(vec({-1})), 1.0, 1e-12);
  const double c = std::cos(0.4), s = std::sin(0.4);
  Matrix R(2, 2);
  R << c, -s, s, c;
  const Polytope rot = linear_image(R, box);
  const Polytope u = convex_hull_union({box, rot});
  std::mt19937 rng(2);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 16; ++k) {
    const Vector d = vec({n01(rng), n01(rng)});
    EXPECT_NEAR(u.support(d), std::max(box.support(d), rot.support(d)), 1e-9);
  }
  EXPECT_THROW(convex_hull_union({}), Error);
}

TEST(Geometry, GaugeNormExamples) {
  const Polytope W = Polytope::symmetric_box(vec({0.3, 0.3}));
  EXPECT_NEAR(gauge_norm(Matrix::Zero(2, 2), W), 0.0, 1e-15);
  EXPECT_NEAR(gauge_norm(Matrix::Identity(2, 2), W), 1.0, 1e-12);
  Matrix M(2, 2);
  M << 1, 1, 0, 1;
  EXPECT_NEAR(gauge_norm(M, W), 2.0, 1e-12);
  EXPECT_NEAR(gauge_norm(M, Polytope::symmetric_box(vec({0.01, 0.01}))), 2.0, 1e-12);
  const Polytope off = Polytope::box(vec({0, -1}), vec({1, 1}));
  EXPECT_THROW(gauge_norm(M, off), Error);
}

TEST(Geometry, ContainsAndRadius) {
  const Containment c1 = contains(Polytope::symmetric_box(vec({2})), Polytope::symmetric_box(vec({1})));
  EXPECT_TRUE(c1.contained);
  EXPECT_NEAR(c1.margin, 1.0, 1e-12);
  EXPECT_FALSE(contains(Polytope::symmetric_box(vec({1})), Polytope::symmetric_box(vec({2}))).contained);
  EXPECT_NEAR(Polytope::symmetric_box(vec({1, 1})).radius(), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(Polytope::zero(2).radius(), 0.0, 1e-15);
  EXPECT_NEAR(Polytope::symmetric_box(vec({0.01, 0.01})).radius(), std::sqrt(2.0) * 1e-2, 1e-15);
  EXPECT_THROW(Polytope::empty(2).radius(), Error);
}

TEST(Geometry, RoundTripMembership) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const Polytope p = random_polygon(rng, 12, 1.0);
    const Polytope h = Polytope::from_halfspaces(p.G(), p.h());
    EXPECT_EQ(h.num_vertices(), p.num_vertices());
    int in = 0, out = 0;
    for (int k = 0; k < 400 && (in < 100 || out < 100); ++k) {
      const Vector x = vec({u(rng), u(rng)});
      const double m = p.point_margin(x);
      if (std::abs(m) < 1e-6) continue;
      EXPECT_EQ(h.contains_point(x), m > 0);
      if (m > 0) ++in; else ++out;
    }
  }
}

TEST(Geometry, ThreeDimensionalHullAndEnumeration) {
  std::mt19937 rng(4);
  std::normal_distribution<double> n01;
  Matrix P(3, 40);
  for (int j = 0; j < 40; ++j) P.col(j) << n01(rng), n01(rng), n01(rng);
  const Polytope hull = Polytope::from_points(P);
  for (int j = 0; j < 40; ++j) EXPECT_TRUE(hull.contains_point(P.col(j), 1e-9));
  const Polytope back = Polytope::from_halfspaces(hull.G(), hull.h());
  EXPECT_EQ(back.num_vertices(), hull.num_vertices());
  for (int k = 0; k < 16; ++k) {
    const Vector d = vec({n01(rng), n01(rng), n01(rng)});
    EXPECT_NEAR(back.support_vertices(d), (d.transpose() * P).maxCoeff(), 1e-9);
  }
  // Cube in 4D via H-rep.
  const Polytope cube = Polytope::symmetric_box(Vector::Ones(4));
  Matrix Gc = cube.G();
  const Polytope back4 = Polytope::from_halfspaces(Gc, cube.h());
  EXPECT_EQ(back4.num_vertices(), 16);
}

TEST(Geometry, NoiseFreeSingletonFromHalfspaces) {
  // x + y <= 1, x + y >= 1, x - y <= 0, x - y >= 0 -> point (0.5, 0.5)
  Matrix G(4, 2);
  G << 1, 1, -1, -1, 1, -1, -1, 1;
  Vector h(4);
  h << 1, -1, 0, 0;
  const Polytope p = Polytope::from_halfspaces(G, h);
  ASSERT_FALSE(p.is_empty());
  EXPECT_EQ(p.num_vertices(), 1);
  EXPECT_NEAR(p.vertices()(0, 0), 0.5, 1e-9);
  EXPECT_NEAR(p.vertices()(1, 0), 0.5, 1e-9);
}

TEST(Geometry, JsonRoundTrip) {
  const Polytope p = Polytope::symmetric_box(vec({1, 2}));
  const Polytope q = Polytope::from_json(p.to_json());
  EXPECT_TRUE(contains(p, q).contained && contains(q, p).contained);
  const Polytope e = Polytope::from_json(Polytope::empty(3).to_json());
  EXPECT_TRUE(e.is_empty());
  EXPECT_EQ(e.dim(), 3);
}

TEST(Geometry, PontryaginDualityAndImageCommutesWithHull) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u01(0, 1);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const Polytope A = random_polygon(rng, 10, 2.0);
    const Polytope B = random_polygon(rng, 6, 0.2).translated(Vector::Zero(2));
    const Polytope D = pontryagin_diff(A, B);
    if (D.is_empty()) continue;
    for (int k = 0; k < 10; ++k) {
      Vector wts(D.num_vertices());
      for (int j = 0; j < wts.size(); ++j) wts(j) = u01(rng);
      wts /= wts.sum();
      const Vector x = D.vertices() * wts;
      for (int j = 0; j < B.num_vertices(); ++j) EXPECT_TRUE(A.contains_point(x + B.vertices().col(j), 1e-9));
    }
    Matrix M(2, 2);
    M << n01(rng), n01(rng), n01(rng), n01(rng);
    const Polytope img = linear_image(M, A);
    const Polytope pts = Polytope::from_points(M * A.vertices());
    EXPECT_TRUE(contains(img, pts).contained && contains(pts, img).contained);
  }
}
