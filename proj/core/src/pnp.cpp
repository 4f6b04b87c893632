#include "gsgtrack/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

namespace gsg {

namespace {

// Real roots of a4 x^4 + ... + a0 from the companion matrix, polished by Newton.
std::vector<double> quartic_roots(const std::array<double, 5>& a) {
  std::vector<double> out;
  if (std::abs(a[4]) < 1e-14 * (std::abs(a[3]) + std::abs(a[2]) + std::abs(a[1]) + std::abs(a[0]))) {
    return out;
  }
  Eigen::Matrix4d C = Eigen::Matrix4d::Zero();
  for (int i = 0; i < 4; ++i) C(0, i) = -a[3 - i] / a[4];
  C(1, 0) = C(2, 1) = C(3, 2) = 1;
  const Eigen::Vector4cd ev = C.eigenvalues();
  auto poly = [&](double x) { return (((a[4] * x + a[3]) * x + a[2]) * x + a[1]) * x + a[0]; };
  auto dpoly = [&](double x) { return ((4 * a[4] * x + 3 * a[3]) * x + 2 * a[2]) * x + a[1]; };
  for (int i = 0; i < 4; ++i) {
    if (std::abs(ev(i).imag()) > 1e-6 * std::max(1.0, std::abs(ev(i).real()))) continue;
    double x = ev(i).real();
    for (int it = 0; it < 8; ++it) {
      const double d = dpoly(x);
      if (d == 0) break;
      x -= poly(x) / d;
    }
    out.push_back(x);
  }
  return out;
}

Vec3 reprojection_residual(const Camera& cam, const Pose& T, const Vec3& X, const Vec2& px) {
  const Vec3 c = T * X;
  if (c.z() <= 1e-9) return Vec3(0, 0, -1);
  const Vec2 r = cam.project(c) - px;
  return Vec3(r.x(), r.y(), 1);
}

}  // namespace

std::vector<Pose> solve_p3p(const std::array<Vec3, 3>& P, const std::array<Vec3, 3>& rays) {
  std::array<Vec3, 3> j;
  for (int i = 0; i < 3; ++i) j[i] = rays[i].normalized();
  const double a2 = (P[1] - P[2]).squaredNorm();
  const double b2 = (P[0] - P[2]).squaredNorm();
  const double c2 = (P[0] - P[1]).squaredNorm();
  std::vector<Pose> poses;
  if (a2 < 1e-24 || b2 < 1e-24 || c2 < 1e-24) return poses;
  const double ca = j[1].dot(j[2]), cb = j[0].dot(j[2]), cg = j[0].dot(j[1]);

  // Grunert's quartic in v = s3/s1 with u = s2/s1.
  const double amc = (a2 - c2) / b2, apc = (a2 + c2) / b2;
  const double bmc = (b2 - c2) / b2, bma = (b2 - a2) / b2;
  std::array<double, 5> A;
  A[4] = (amc - 1) * (amc - 1) - 4 * c2 / b2 * ca * ca;
  A[3] = 4 * (amc * (1 - amc) * cb - (1 - apc) * ca * cg + 2 * c2 / b2 * ca * ca * cb);
  A[2] = 2 * (amc * amc - 1 + 2 * amc * amc * cb * cb + 2 * bmc * ca * ca - 4 * apc * ca * cb * cg +
              2 * bma * cg * cg);
  A[1] = 4 * (-amc * (1 + amc) * cb + 2 * a2 / b2 * cg * cg * cb - (1 - apc) * ca * cg);
  A[0] = (1 + amc) * (1 + amc) - 4 * a2 / b2 * cg * cg;

  for (const double v : quartic_roots(A)) {
    if (v <= 0) continue;
    const double den = 2 * (cg - v * ca);
    if (std::abs(den) < 1e-12) continue;
    const double u = ((-1 + amc) * v * v - 2 * amc * cb * v + 1 + amc) / den;
    if (u <= 0) continue;
    const double s1sq = b2 / (1 + v * v - 2 * v * cb);
    if (!(s1sq > 0)) continue;
    const double s1 = std::sqrt(s1sq);
    const std::vector<Vec3> cam{s1 * j[0], u * s1 * j[1], v * s1 * j[2]};
    const std::vector<Vec3> obj{P[0], P[1], P[2]};
    poses.push_back(align_rigid(obj, cam));
  }
  return poses;
}

Pose refine_pnp(const std::vector<Vec3>& points, const std::vector<Vec2>& pixels,
                const std::vector<int>& subset, const Camera& cam, const Pose& init,
                int iterations) {
  Pose T = init;
  auto cost = [&](const Pose& pose) {
    double c = 0;
    for (int i : subset) {
      const Vec3 r = reprojection_residual(cam, pose, points[i], pixels[i]);
      if (r.z() > 0) c += r.head<2>().squaredNorm();
    }
    return c;
  };
  double current = cost(T);
  double lambda = 1e-3;
  for (int it = 0; it < iterations; ++it) {
    Mat6 H = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (int i : subset) {
      const Vec3 c = T * points[i];
      if (c.z() <= 1e-9) continue;
      Eigen::Matrix<double, 2, 3> Jp;
      Jp << cam.fx / c.z(), 0, -cam.fx * c.x() / (c.z() * c.z()), 0, cam.fy / c.z(),
          -cam.fy * c.y() / (c.z() * c.z());
      const Eigen::Matrix<double, 2, 6> J = Jp * pose_jacobian_point(T, c);
      const Vec2 r = cam.project(c) - pixels[i];
      H += J.transpose() * J;
      g += J.transpose() * r;
    }
    bool accepted = false;
    for (int tries = 0; tries < 10 && !accepted; ++tries) {
      Mat6 Hd = H;
      Hd.diagonal() *= 1 + lambda;
      const Vec6 d = Hd.ldlt().solve(-g);
      if (!d.allFinite()) break;
      const Pose cand = T.retract(Twist::from_vector(d));
      const double c = cost(cand);
      if (c < current) {
        const double rel = (current - c) / std::max(current, 1e-300);
        T = cand;
        current = c;
        lambda = std::max(lambda * 0.5, 1e-12);
        accepted = true;
        if (rel < 1e-14 || d.norm() < 1e-14) return T;
      } else {
        lambda *= 10;
      }
    }
    if (!accepted) break;
  }
  return T;
}

PnpResult solve_pnp_ransac(const std::vector<Vec3>& points, const std::vector<Vec2>& pixels,
                           const Camera& cam, const PnpSettings& settings, std::uint64_t seed) {
  if (points.size() != pixels.size()) {
    throw Error(ErrorCode::PreconditionFailed, "pnp: point and pixel counts differ");
  }
  const int n = static_cast<int>(points.size());
  if (n < std::max(settings.min_inliers, 4)) {
    throw Error(ErrorCode::DegenerateCorrespondences,
                "pnp: " + std::to_string(n) + " correspondences");
  }
  const double thr2 = settings.inlier_threshold_px * settings.inlier_threshold_px;
  auto inliers_of = [&](const Pose& T) {
    std::vector<int> in;
    for (int i = 0; i < n; ++i) {
      const Vec3 r = reprojection_residual(cam, T, points[i], pixels[i]);
      if (r.z() > 0 && r.head<2>().squaredNorm() <= thr2) in.push_back(i);
    }
    return in;
  };

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<int> best;
  Pose best_pose;
  int needed = settings.max_iterations;
  for (int it = 0; it < needed && it < settings.max_iterations; ++it) {
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = pick(rng);
        fresh = std::find(idx, idx + k, idx[k]) == idx + k;
      } while (!fresh);
    }
    std::array<Vec3, 3> P{points[idx[0]], points[idx[1]], points[idx[2]]};
    std::array<Vec3, 3> R{cam.ray(pixels[idx[0]].x(), pixels[idx[0]].y()),
                          cam.ray(pixels[idx[1]].x(), pixels[idx[1]].y()),
                          cam.ray(pixels[idx[2]].x(), pixels[idx[2]].y())};
    // The fourth point disambiguates the P3P solutions.
    const Pose* chosen = nullptr;
    double chosen_err = std::numeric_limits<double>::infinity();
    const auto hyps = solve_p3p(P, R);
    for (const auto& h : hyps) {
      const Vec3 r = reprojection_residual(cam, h, points[idx[3]], pixels[idx[3]]);
      if (r.z() < 0) continue;
      const double e = r.head<2>().squaredNorm();
      if (e < chosen_err) {
        chosen_err = e;
        chosen = &h;
      }
    }
    if (!chosen) continue;
    auto in = inliers_of(*chosen);
    if (in.size() > best.size()) {
      best = std::move(in);
      best_pose = *chosen;
      const double w = static_cast<double>(best.size()) / n;
      const double p_all = std::pow(w, 4);
      if (p_all >= 1 - 1e-12) {
        needed = it + 1;
      } else {
        needed = static_cast<int>(std::ceil(std::log(1 - settings.confidence) / std::log(1 - p_all)));
      }
    }
  }
  if (static_cast<int>(best.size()) < settings.min_inliers) {
    throw Error(ErrorCode::DegenerateCorrespondences,
                "pnp: " + std::to_string(best.size()) + " inliers");
  }
  PnpResult res;
  res.pose = refine_pnp(points, pixels, best, cam, best_pose, settings.refine_iterations);
  // One re-selection of the consensus set after refinement.
  res.inliers = inliers_of(res.pose);
  if (static_cast<int>(res.inliers.size()) < settings.min_inliers) {
    throw Error(ErrorCode::DegenerateCorrespondences, "pnp: consensus lost after refinement");
  }
  res.pose = refine_pnp(points, pixels, res.inliers, cam, res.pose, settings.refine_iterations);
  double sse = 0;
  for (int i : res.inliers) sse += reprojection_residual(cam, res.pose, points[i], pixels[i]).head<2>().squaredNorm();
  res.rms_px = std::sqrt(sse / res.inliers.size());
  return res;
}

}  // namespace gsg
