#include "gsgtrack/metrics.hpp"

#include "gsgtrack/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace gsg {

namespace {

void require_points(const std::vector<Vec3>& p, const char* what) {
  if (p.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + ": empty point set");
}

// Mean nearest-neighbour distance from each point of a to the set b.
double mean_nearest(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double sum = 0;
  if (b.size() <= 2000) {
    for (const auto& p : a) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
      sum += std::sqrt(best);
    }
  } else {
    const KdTree tree(b);
    for (const auto& p : a) sum += std::sqrt(tree.nearest(p).sq_dist);
  }
  return sum / a.size();
}

}  // namespace

double add_metric(const std::vector<Vec3>& pts, const Pose& gt, const Pose& est) {
  require_points(pts, "add");
  double sum = 0;
  for (const auto& x : pts) sum += ((gt * x) - (est * x)).norm();
  return sum / pts.size();
}

double adds_metric(const std::vector<Vec3>& pts, const Pose& gt, const Pose& est) {
  require_points(pts, "adds");
  std::vector<Vec3> a, b;
  a.reserve(pts.size());
  b.reserve(pts.size());
  for (const auto& x : pts) {
    a.push_back(gt * x);
    b.push_back(est * x);
  }
  return mean_nearest(a, b);
}

PoseError pose_error(const std::vector<Vec3>& pts, const Pose& gt, const Pose& est) {
  PoseError e;
  e.add = add_metric(pts, gt, est);
  e.add_s = adds_metric(pts, gt, est);
  e.rot_err = geodesic_rotation_distance(gt, est);
  e.trans_err = (gt.translation() - est.translation()).norm();
  return e;
}

std::vector<Pose> align_to_first_frame(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  if (est.size() != gt.size()) throw Error(ErrorCode::LengthMismatch, "trajectory lengths differ");
  std::vector<Pose> out;
  if (est.empty()) return out;
  const Pose A = est.front().inverse() * gt.front();
  for (const auto& T : est) out.push_back(T * A);
  return out;
}

double auc(const std::vector<double>& errors, double max_thresh) {
  if (errors.empty()) throw Error(ErrorCode::EmptyInput, "auc: no errors");
  if (!(max_thresh > 0)) throw Error(ErrorCode::PreconditionFailed, "auc: max_thresh must be > 0");
  // Each error e <= max contributes recall 1/n on [e, max].
  double area = 0;
  for (double e : errors) {
    const double lo = std::max(e, 0.0);
    if (lo <= max_thresh) area += max_thresh - lo;
  }
  return 100.0 * area / (errors.size() * max_thresh);
}

std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& points, double voxel) {
  if (!(voxel > 0)) return points;
  std::map<std::tuple<long long, long long, long long>, std::pair<Vec3, int>> cells;
  for (const auto& p : points) {
    const auto key = std::make_tuple(static_cast<long long>(std::floor(p.x() / voxel)),
                                     static_cast<long long>(std::floor(p.y() / voxel)),
                                     static_cast<long long>(std::floor(p.z() / voxel)));
    auto& c = cells.try_emplace(key, Vec3::Zero(), 0).first->second;
    c.first += p;
    c.second += 1;
  }
  std::vector<Vec3> out;
  out.reserve(cells.size());
  for (auto& [key, c] : cells) out.push_back(c.first / c.second);
  return out;
}

double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double voxel) {
  require_points(a, "chamfer");
  require_points(b, "chamfer");
  const auto da = voxel_downsample(a, voxel), db = voxel_downsample(b, voxel);
  return 0.5 * mean_nearest(da, db) + 0.5 * mean_nearest(db, da);
}

double psnr(const Image& img, const Image& ref, const Mask* mask) {
  if (!img.same_shape(ref) || img.channels != ref.channels ||
      (mask && !mask->same_shape(img))) {
    throw Error(ErrorCode::PreconditionFailed, "psnr: shape mismatch");
  }
  double sse = 0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    if (mask && !mask->at(p)) continue;
    for (int c = 0; c < img.channels; ++c) {
      const double d = img.at(p, c) - ref.at(p, c);
      sse += d * d;
    }
    n += img.channels;
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "psnr: empty mask");
  const double mse = sse / n;
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& img, const Image& ref) {
  if (!img.same_shape(ref) || img.channels != ref.channels) {
    throw Error(ErrorCode::PreconditionFailed, "ssim: shape mismatch");
  }
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  if (img.height < kWin || img.width < kWin) {
    throw Error(ErrorCode::PreconditionFailed, "ssim: image smaller than the window");
  }
  double w[kWin];
  double wsum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    w[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    wsum += w[i];
  }
  for (double& v : w) v /= wsum;
  double total = 0;
  std::size_t count = 0;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y + kWin <= img.height; ++y) {
      for (int x = 0; x + kWin <= img.width; ++x) {
        double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
        for (int i = 0; i < kWin; ++i) {
          for (int j = 0; j < kWin; ++j) {
            const double k = w[i] * w[j];
            const double a = img(y + i, x + j, c), b = ref(y + i, x + j, c);
            mx += k * a;
            my += k * b;
            sxx += k * a * a;
            syy += k * b * b;
            sxy += k * a * b;
          }
        }
        const double vx = sxx - mx * mx, vy = syy - my * my, cxy = sxy - mx * my;
        total += ((2 * mx * my + C1) * (2 * cxy + C2)) /
                 ((mx * mx + my * my + C1) * (vx + vy + C2));
        ++count;
      }
    }
  }
  return total / count;
}

TrajectoryError ape_rpe(const std::vector<Pose>& est, const std::vector<Pose>& gt) {
  if (est.size() != gt.size()) throw Error(ErrorCode::LengthMismatch, "trajectory lengths differ");
  TrajectoryError out;
  if (est.empty()) return out;
  // Camera-to-object transforms; the object frame is the world.
  std::vector<Pose> P, Q;
  std::vector<Vec3> ce, cg;
  for (std::size_t i = 0; i < est.size(); ++i) {
    P.push_back(est[i].inverse());
    Q.push_back(gt[i].inverse());
    ce.push_back(P.back().translation());
    cg.push_back(Q.back().translation());
  }
  const Pose S = est.size() >= 2 ? align_rigid(ce, cg) : Pose(Mat3::Identity(), cg[0] - ce[0]);
  double sse = 0;
  for (std::size_t i = 0; i < ce.size(); ++i) sse += (S * ce[i] - cg[i]).squaredNorm();
  out.ape = std::sqrt(sse / ce.size());
  if (est.size() >= 2) {
    double rse = 0;
    for (std::size_t i = 0; i + 1 < est.size(); ++i) {
      const Pose E = (Q[i].inverse() * Q[i + 1]).inverse() * (P[i].inverse() * P[i + 1]);
      rse += E.translation().squaredNorm();
    }
    out.rpe = std::sqrt(rse / (est.size() - 1));
  }
  return out;
}

}  // namespace gsg
