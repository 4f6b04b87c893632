#pragma once

#include "gsgtrack/se3.hpp"

#include <vector>

namespace gsg {

// Mean distance between matched model points under the two poses.
double add_metric(const std::vector<Vec3>& model_points, const Pose& gt, const Pose& est);
// Mean distance from each ground-truth-posed point to the nearest
// estimate-posed point. Brute force up to 2000 points, kd-tree above.
double adds_metric(const std::vector<Vec3>& model_points, const Pose& gt, const Pose& est);

struct PoseError {
  double add = 0;
  double add_s = 0;
  double rot_err = 0;    // radians
  double trans_err = 0;  // scene units
};
PoseError pose_error(const std::vector<Vec3>& model_points, const Pose& gt, const Pose& est);

// Re-expresses an estimated trajectory in the ground-truth object frame using
// the first frame: est_k * est_0^-1 * gt_0.
std::vector<Pose> align_to_first_frame(const std::vector<Pose>& est, const std::vector<Pose>& gt);

// Area under recall(t) = |{e <= t}| / n on [0, max_thresh], in percent. The
// recall curve is a step function and is integrated exactly.
double auc(const std::vector<double>& errors, double max_thresh = 0.3);

// Centroid of the points in each occupied voxel, ordered by voxel key.
std::vector<Vec3> voxel_downsample(const std::vector<Vec3>& points, double voxel);

// Symmetric Chamfer distance: half the mean nearest-neighbour distance each
// way. Both sets are voxel-downsampled first when voxel > 0.
double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double voxel = 0.005);

// 10 log10(1 / MSE) over all channels, restricted to the mask when given.
// Identical inputs report 99 dB.
double psnr(const Image& img, const Image& ref, const Mask* mask = nullptr);

// Mean SSIM over all valid 11x11 windows (Gaussian weights, sigma 1.5) and
// channels.
double ssim(const Image& img, const Image& ref);

struct TrajectoryError {
  double ape = 0;  // RMS camera-centre error after rigid alignment
  double rpe = 0;  // RMS translational error of frame-to-frame motion
};
// Poses map object to camera. Throws LengthMismatch for unequal lengths.
TrajectoryError ape_rpe(const std::vector<Pose>& est, const std::vector<Pose>& gt);

}  // namespace gsg
