#include "gsgtrack/distance_transform.hpp"
#include "gsgtrack/metrics.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace gsg;
using namespace gsg::testing;

namespace {

std::vector<Vec3> cloud(std::mt19937_64& rng, int n, double r = 0.1) {
  std::vector<Vec3> p;
  for (int i = 0; i < n; ++i) p.push_back(random_vec3(rng, -r, r));
  return p;
}

std::vector<Vec3> sphere_points(int n, double r) {
  // Fibonacci lattice.
  std::vector<Vec3> p;
  const double golden = M_PI * (3 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1 - 2 * (i + 0.5) / n, rad = std::sqrt(1 - z * z);
    p.push_back(r * Vec3(rad * std::cos(golden * i), rad * std::sin(golden * i), z));
  }
  return p;
}

double brute_nearest_mean(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double s = 0;
  for (const auto& p : a) {
    double best = 1e300;
    for (const auto& q : b) best = std::min(best, (p - q).norm());
    s += best;
  }
  return s / a.size();
}

Image random_image(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0, 1);
  Image img(h, w, 3);
  for (auto& v : img.data) v = u(rng);
  return img;
}

// SSIM of one channel computed window by window with an explicit 2D kernel.
double ssim_oracle(const Image& a, const Image& b) {
  double k[11][11], ksum = 0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) ksum += k[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  double total = 0;
  int n = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y + 11 <= a.height; ++y) {
      for (int x = 0; x + 11 <= a.width; ++x) {
        double mx = 0, my = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            mx += k[i][j] / ksum * a(y + i, x + j, c);
            my += k[i][j] / ksum * b(y + i, x + j, c);
          }
        double vx = 0, vy = 0, cv = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double da = a(y + i, x + j, c) - mx, db = b(y + i, x + j, c) - my;
            vx += k[i][j] / ksum * da * da;
            vy += k[i][j] / ksum * db * db;
            cv += k[i][j] / ksum * da * db;
          }
        const double C1 = 1e-4, C2 = 9e-4;
        total += (2 * mx * my + C1) * (2 * cv + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2));
        ++n;
      }
    }
  }
  return total / n;
}

}  // namespace

TEST(Add, MatchesPerPointOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto pts = cloud(rng, 300);
    const Pose gt = random_pose(rng), est = random_pose(rng);
    double oracle = 0;
    for (const auto& x : pts) {
      const Vec4 h(x.x(), x.y(), x.z(), 1.0);
      oracle += ((gt.matrix() * h) - (est.matrix() * h)).norm();
    }
    EXPECT_NEAR(add_metric(pts, gt, est), oracle / pts.size(), 1e-12);
  }
  const auto pts = cloud(rng, 50);
  const Pose gt = random_pose(rng);
  EXPECT_EQ(add_metric(pts, gt, gt), 0.0);
  const Pose shifted(gt.rotation(), gt.translation() + Vec3(0.07, 0, 0));
  EXPECT_NEAR(add_metric(pts, gt, shifted), 0.07, 1e-15);
}

TEST(AddS, MatchesBruteForceAndNeverExceedsAdd) {
  std::mt19937_64 rng(2);
  for (int n : {10, 500, 1000, 2500}) {
    const auto pts = cloud(rng, n);
    const Pose gt = random_pose(rng, 0.5, 0.1), est = random_pose(rng, 0.5, 0.1);
    std::vector<Vec3> a, b;
    for (const auto& x : pts) {
      a.push_back(gt * x);
      b.push_back(est * x);
    }
    const double s = adds_metric(pts, gt, est);
    EXPECT_NEAR(s, brute_nearest_mean(a, b), 1e-12) << n;
    EXPECT_LE(s, add_metric(pts, gt, est) + 1e-15);
    EXPECT_EQ(adds_metric(pts, gt, gt), 0.0);
  }
}

TEST(AddS, SymmetricObjectScoresNearZeroUnderRotation) {
  const auto pts = sphere_points(1500, 0.1);
  const Pose gt(Mat3::Identity(), Vec3(0, 0, 0.5));
  std::mt19937_64 rng(3);
  const Pose est(random_pose(rng).rotation(), gt.translation());
  const double add = add_metric(pts, gt, est), adds = adds_metric(pts, gt, est);
  EXPECT_GT(add, 0.02);
  EXPECT_LT(adds, 0.006);  // about the lattice spacing
}

TEST(Metrics, InvariantUnderPointRelabeling) {
  std::mt19937_64 rng(4);
  auto pts = cloud(rng, 200);
  auto other = cloud(rng, 150);
  const Pose gt = random_pose(rng), est = random_pose(rng);
  const double add = add_metric(pts, gt, est), adds = adds_metric(pts, gt, est);
  const double cd = chamfer(pts, other, 0);
  std::shuffle(pts.begin(), pts.end(), rng);
  std::shuffle(other.begin(), other.end(), rng);
  EXPECT_NEAR(add_metric(pts, gt, est), add, 1e-14);
  EXPECT_NEAR(adds_metric(pts, gt, est), adds, 1e-14);
  EXPECT_NEAR(chamfer(pts, other, 0), cd, 1e-14);
}

TEST(Auc, ClosedFormsAndNumericIntegration) {
  EXPECT_DOUBLE_EQ(auc({0, 0, 0}), 100.0);
  EXPECT_DOUBLE_EQ(auc({0.31, 0.5, 2}), 0.0);
  std::vector<double> uniform;
  for (int i = 0; i < 1000; ++i) uniform.push_back(0.3 * (i + 0.5) / 1000);
  EXPECT_NEAR(auc(uniform), 50.0, 0.5);

  std::mt19937_64 rng(5);
  std::exponential_distribution<double> ex(10);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> e;
    for (int i = 0; i < 50; ++i) e.push_back(ex(rng));
    // Midpoint-rule integral of the recall curve.
    const int steps = 100000;
    double area = 0;
    for (int s = 0; s < steps; ++s) {
      const double tau = 0.3 * (s + 0.5) / steps;
      area += std::count_if(e.begin(), e.end(), [&](double x) { return x <= tau; }) / 50.0;
    }
    EXPECT_NEAR(auc(e), 100.0 * area / steps, 0.5);
    // Monotone: shrinking errors never lowers the AUC.
    auto smaller = e;
    for (auto& x : smaller) x *= 0.8;
    EXPECT_GE(auc(smaller), auc(e));
  }
}

TEST(Chamfer, BruteForceSymmetryAndTranslation) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 10; ++t) {
    const auto a = cloud(rng, 120), b = cloud(rng, 90);
    const double oracle = 0.5 * brute_nearest_mean(a, b) + 0.5 * brute_nearest_mean(b, a);
    EXPECT_NEAR(chamfer(a, b, 0), oracle, 1e-12);
    EXPECT_EQ(chamfer(a, b), chamfer(b, a));
    EXPECT_EQ(chamfer(a, a), 0.0);
  }
  // Sparse set, offset much larger than the spacing and the voxel.
  std::vector<Vec3> a, b;
  for (int i = 0; i < 5; ++i) a.push_back(Vec3(i, 0, 0));
  for (const auto& p : a) b.push_back(p + Vec3(0, 0.3, 0));
  EXPECT_NEAR(chamfer(a, b), 0.3, 1e-12);
}

TEST(Chamfer, DownsampleUsesVoxelCentroids) {
  const std::vector<Vec3> pts{{0.001, 0.001, 0.001}, {0.003, 0.001, 0.001}, {0.0121, 0, 0}};
  const auto d = voxel_downsample(pts, 0.005);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_NEAR((d[0] - Vec3(0.002, 0.001, 0.001)).norm(), 0, 1e-15);
  EXPECT_NEAR((d[1] - Vec3(0.0121, 0, 0)).norm(), 0, 1e-15);
}

TEST(Psnr, ClosedForms) {
  std::mt19937_64 rng(7);
  Image ref = random_image(rng, 16, 16);
  for (auto& v : ref.data) v *= 0.8;
  EXPECT_EQ(psnr(ref, ref), 99.0);
  Image off = ref;
  for (auto& v : off.data) v += 0.1;
  EXPECT_NEAR(psnr(off, ref), 20.0, 1e-9);
  Mask m(16, 16);
  m(3, 4) = 1;
  Image one = ref;
  one(0, 0, 0) = 5;  // outside the mask: ignored
  one(3, 4, 1) += 0.3;
  EXPECT_NEAR(psnr(one, ref, &m), 10 * std::log10(3 / 0.09), 1e-9);
}

TEST(Ssim, MatchesScalarWindowOracle) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5; ++t) {
    const Image a = random_image(rng, 16, 16);
    Image b = a;
    std::normal_distribution<double> n(0, 0.1 * (t + 1));
    for (auto& v : b.data) v = std::clamp(v + n(rng), 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-6);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  }
}

TEST(Trajectory, AlignmentInvarianceAndDirectOracle) {
  std::mt19937_64 rng(9);
  std::vector<Pose> gt;
  for (int i = 0; i < 15; ++i) gt.push_back(random_pose(rng, 1.0, 0.5));
  const auto same = ape_rpe(gt, gt);
  EXPECT_NEAR(same.ape, 0, 1e-12);
  EXPECT_NEAR(same.rpe, 0, 1e-12);
  // A constant rigid change of the object frame moves every camera alike.
  const Pose offset = random_pose(rng);
  std::vector<Pose> est;
  for (const auto& T : gt) est.push_back(T * offset);
  const auto aligned = ape_rpe(est, gt);
  EXPECT_NEAR(aligned.ape, 0, 1e-9);
  EXPECT_NEAR(aligned.rpe, 0, 1e-9);

  // Random estimate vs matrices worked out directly.
  est.clear();
  for (const auto& T : gt) est.push_back(T.retract(random_twist(rng, 0.05, 0.02)));
  const auto r = ape_rpe(est, gt);
  std::vector<Vec3> ce, cg;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ce.push_back(-(est[i].rotation().transpose() * est[i].translation()));
    cg.push_back(-(gt[i].rotation().transpose() * gt[i].translation()));
  }
  const Pose S = align_rigid(ce, cg);
  double sse = 0, rse = 0;
  for (std::size_t i = 0; i < ce.size(); ++i) sse += (S * ce[i] - cg[i]).squaredNorm();
  for (std::size_t i = 0; i + 1 < gt.size(); ++i) {
    const Mat4 Pi = est[i].matrix().inverse(), Pj = est[i + 1].matrix().inverse();
    const Mat4 Qi = gt[i].matrix().inverse(), Qj = gt[i + 1].matrix().inverse();
    const Mat4 E = (Qi.inverse() * Qj).inverse() * (Pi.inverse() * Pj);
    rse += E.block<3, 1>(0, 3).squaredNorm();
  }
  EXPECT_NEAR(r.ape, std::sqrt(sse / ce.size()), 1e-9);
  EXPECT_NEAR(r.rpe, std::sqrt(rse / (gt.size() - 1)), 1e-9);
  try {
    ape_rpe(est, std::vector<Pose>(gt.begin(), gt.end() - 1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Trajectory, FirstFrameAlignment) {
  std::mt19937_64 rng(10);
  std::vector<Pose> gt, est;
  const Pose frame_change = random_pose(rng);
  for (int i = 0; i < 5; ++i) {
    gt.push_back(random_pose(rng));
    est.push_back(gt.back() * frame_change);
  }
  const auto a = align_to_first_frame(est, gt);
  for (int i = 0; i < 5; ++i) EXPECT_LT((a[i].matrix() - gt[i].matrix()).norm(), 1e-12);
}
