#pragma once

#include "gsgtrack/camera.hpp"
#include "gsgtrack/se3.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace gsg {

// All poses (up to four) mapping three object points onto three camera rays.
// `rays` need not be normalized.
std::vector<Pose> solve_p3p(const std::array<Vec3, 3>& points, const std::array<Vec3, 3>& rays);

struct PnpSettings {
  int max_iterations = 300;
  double inlier_threshold_px = 2.0;
  int min_inliers = 6;
  double confidence = 0.999;  // adaptive early stop
  int refine_iterations = 20;
};

struct PnpResult {
  Pose pose;                 // object -> camera
  std::vector<int> inliers;  // indices into the input
  double rms_px = 0;         // reprojection RMS over the inliers
};

// Gauss-Newton reprojection refinement from an initial pose. Points behind
// the camera are skipped.
Pose refine_pnp(const std::vector<Vec3>& points, const std::vector<Vec2>& pixels,
                const std::vector<int>& subset, const Camera& cam, const Pose& init,
                int iterations);

// P3P hypotheses in a RANSAC loop, then refinement on the consensus set.
// Deterministic in seed. Throws DegenerateCorrespondences with fewer than
// `min_inliers` inputs or inliers.
PnpResult solve_pnp_ransac(const std::vector<Vec3>& points, const std::vector<Vec2>& pixels,
                           const Camera& cam, const PnpSettings& settings = {},
                           std::uint64_t seed = 0);

}  // namespace gsg
