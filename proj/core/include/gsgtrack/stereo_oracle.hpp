#pragma once

#include "gsgtrack/pointmap.hpp"
#include "gsgtrack/scene.hpp"

#include <filesystem>

namespace gsg {

struct NoiseProfile {
  double depth_sigma = 0;        // along-ray depth noise, scene units
  double outlier_rate = 0;       // Bernoulli rate of gross outliers, [0, 1)
  double outlier_scale = 0.02;   // outlier displacement scale, scene units
  double confidence_fidelity = 1;  // 1: confidence tracks error; 0: constant
  // Probability that a whole pair fails the way a learned matcher does:
  // a symmetry flip, a depth push on the reference view or a low-confidence
  // match. Zero by default.
  double pair_failure_rate = 0;
  double global_scale = 1;       // multiplies every emitted point
  bool edge_offset = true;       // random rigid edge frame vs camera-u frame

  void validate() const;
};

enum class PairFailure { None, Flip, DepthPush, LowConfidence };

struct MatchedPair {
  PointMap u, v;              // both in the edge frame
  Pose relative;              // ground-truth T_v T_u^-1
  // Edge frame -> camera u, in camera units multiplied by global_scale.
  Pose edge_to_camera_u;
  Mask outliers_u, outliers_v;  // which pixels received gross outliers
  PairFailure failure = PairFailure::None;
};

// Simulated stereo matching between frames u (reference) and v. Deterministic
// in seed. Throws NoOverlap when either frame does not see the object.
MatchedPair match_pair(const SyntheticScene& scene, int frame_u, int frame_v,
                       const NoiseProfile& noise, std::uint64_t seed);

// Same, for arbitrary views (used after preprocessing changes intrinsics).
MatchedPair match_views(const SyntheticScene& scene, const Pose& pose_u, const Camera& cam_u,
                        const Pose& pose_v, const Camera& cam_v, const NoiseProfile& noise,
                        std::uint64_t seed);

// Corruptions used to emulate matcher failures. `amount` is an angle in
// radians for Flip, a distance for DepthPush and a target mean confidence
// for LowConfidence. `pivot` is the flip centre in the edge frame.
void corrupt_pair(MatchedPair& pair, PairFailure kind, double amount, const Vec3& pivot,
                  const Vec3& axis = Vec3::UnitY());

struct StoredEdge {
  int u = 0, v = 0;
  PointMap pm_u, pm_v;
};

// Directory layout: edge_<u>_<v>_{pts_u,pts_v,conf_u,conf_v}.gsgr.
void save_pointmaps(const std::filesystem::path& dir, const std::vector<StoredEdge>& edges);
// Throws FormatError (with byte offset) on malformed files or when the four
// rasters of an edge disagree in size.
std::vector<StoredEdge> load_pointmaps(const std::filesystem::path& dir);

}  // namespace gsg
