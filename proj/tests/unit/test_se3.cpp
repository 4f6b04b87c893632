#include "gsgtrack/se3.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace gsg;
using gsg::testing::random_pose;
using gsg::testing::random_twist;

namespace {

constexpr double kPi = std::numbers::pi;

Pose perturb(const Pose& p, int coord, double h) {
  Vec6 d = Vec6::Zero();
  d(coord) = h;
  return p.retract(Twist::from_vector(d));
}

}  // namespace

TEST(Se3, ExpOfZeroIsIdentity) {
  const Pose p = exp_map(Twist{});
  EXPECT_TRUE(p.rotation().isIdentity(0));
  EXPECT_TRUE(p.translation().isZero(0));
}

TEST(Se3, QuarterTurnAboutZ) {
  const Pose p = exp_map({Vec3::Zero(), Vec3(0, 0, kPi / 2)});
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((p.rotation() - expected).cwiseAbs().maxCoeff(), 1e-15);
  const Twist t = log_map(p);
  EXPECT_LT((t.rotational - Vec3(0, 0, kPi / 2)).norm(), 1e-12);
  EXPECT_LT(t.translational.norm(), 1e-15);
}

TEST(Se3, LogOfIdentityIsZero) {
  EXPECT_TRUE(log_map(Pose::identity()).vector().isZero(0));
}

TEST(Se3, LogExpRoundTrip) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Twist t = random_twist(rng, kPi - 1e-3, 2.0);
    const Pose p = exp_map(t);
    ASSERT_TRUE(p.is_valid());
    const Twist back = log_map(p);
    ASSERT_LT((back.vector() - t.vector()).cwiseAbs().maxCoeff(), 1e-8) << "sample " << i;
    const Pose again = exp_map(back);
    ASSERT_LT((again.matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Se3, SmallAnglesStayAccurate) {
  for (double a : {1e-12, 1e-9, 1e-6, 1e-4}) {
    const Twist t{Vec3(0.3, -0.2, 0.1), Vec3(a, -2 * a, 0.5 * a)};
    const Twist back = log_map(exp_map(t));
    EXPECT_LT((back.vector() - t.vector()).cwiseAbs().maxCoeff(), 1e-12) << a;
  }
}

TEST(Se3, AngleNearPiIsReported) {
  const Pose p = exp_map({Vec3(0.1, 0, 0), Vec3(kPi - 1e-8, 0, 0)});
  try {
    log_map(p);
    FAIL() << "expected AngleNearPi";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AngleNearPi);
  }
  const Twist robust = log_map_robust(p);
  EXPECT_NEAR(robust.rotational.norm(), kPi - 1e-8, 1e-6);
  EXPECT_LT((exp_map(robust).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Se3, InverseAndAssociativity) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose e = a * a.inverse();
    EXPECT_LT((e.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((((a * b) * c).matrix() - (a * (b * c)).matrix()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE((a * b).is_valid());
    EXPECT_TRUE(a.retract(gsg::testing::random_twist(rng, 1.0, 1.0)).is_valid());
  }
}

TEST(Se3, PointJacobianAtOrigin) {
  const Mat36 J = pose_jacobian_point(Pose::identity(), Vec3::Zero());
  EXPECT_TRUE(J.leftCols<3>().isIdentity(0));
  EXPECT_TRUE(J.rightCols<3>().isZero(0));
}

TEST(Se3, PointJacobianUnitX) {
  // Rotating e_x by a small angle about z moves it along +y, about y along -z.
  const Mat36 J = pose_jacobian_point(Pose::identity(), Vec3(1, 0, 0));
  Mat3 right;
  right << 0, 0, 0, 0, 0, 1, 0, -1, 0;
  EXPECT_TRUE(J.rightCols<3>().isApprox(right));
}

TEST(Se3, PointJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const double h = 1e-6;
  double worst = 0;
  for (int n = 0; n < 1000; ++n) {
    const Pose p = random_pose(rng);
    const Vec3 x = gsg::testing::random_vec3(rng, -2, 2);
    const Vec3 mu = p * x;
    const Mat36 J = pose_jacobian_point(p, mu);
    for (int k = 0; k < 6; ++k) {
      const Vec3 fd = (perturb(p, k, h) * x - perturb(p, k, -h) * x) / (2 * h);
      const double scale = std::max(1.0, J.col(k).norm());
      worst = std::max(worst, (fd - J.col(k)).norm() / scale);
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Se3, RotationJacobianIdentityHasNoTranslationColumns) {
  const Mat96 J = pose_jacobian_rotation(Pose::identity());
  EXPECT_TRUE(J.leftCols<3>().isZero(0));
  // Perturbing about z: d(W e_k) = -e_k^x e_z = e_z x e_k.
  for (int k = 0; k < 3; ++k) {
    const Vec3 expected = Vec3::UnitZ().cross(Vec3::Unit(k));
    EXPECT_LT((J.block<3, 1>(3 * k, 5) - expected).norm(), 1e-15);
  }
}

TEST(Se3, RotationJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  const double h = 1e-6;
  double worst = 0;
  for (int n = 0; n < 1000; ++n) {
    const Pose p = random_pose(rng);
    const Mat96 J = pose_jacobian_rotation(p);
    for (int k = 0; k < 6; ++k) {
      const Mat3 d = (perturb(p, k, h).rotation() - perturb(p, k, -h).rotation()) / (2 * h);
      const Eigen::Map<const Eigen::Matrix<double, 9, 1>> fd(d.data());
      const double scale = std::max(1.0, J.col(k).norm());
      worst = std::max(worst, (fd - J.col(k)).norm() / scale);
    }
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Se3, GeodesicDistance) {
  const Pose z90 = exp_map({Vec3::Zero(), Vec3(0, 0, kPi / 2)});
  EXPECT_EQ(geodesic_rotation_distance(z90, z90), 0.0);
  EXPECT_NEAR(geodesic_rotation_distance(Pose::identity(), z90), kPi / 2, 1e-15);

  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const double ab = geodesic_rotation_distance(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, kPi);
    EXPECT_NEAR(ab, geodesic_rotation_distance(b, a), 1e-12);
    EXPECT_LE(ab, geodesic_rotation_distance(a, c) + geodesic_rotation_distance(c, b) + 1e-12);
  }
}

TEST(Se3, RowMajorRoundTrip) {
  std::mt19937_64 rng(17);
  const Pose p = random_pose(rng);
  const Pose q = Pose::from_row_major(p.row_major());
  EXPECT_EQ(p.matrix(), q.matrix());
  EXPECT_EQ(p.row_major()[3], p.translation().x());
}

TEST(Se3, AlignRigidRecoversTransform) {
  std::mt19937_64 rng(19);
  const Pose t = random_pose(rng);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 50; ++i) {
    src.push_back(gsg::testing::random_vec3(rng, -1, 1));
    dst.push_back(t * src.back());
  }
  const Pose est = align_rigid(src, dst);
  EXPECT_LT((est.matrix() - t.matrix()).cwiseAbs().maxCoeff(), 1e-10);
}
