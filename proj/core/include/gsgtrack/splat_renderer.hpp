#pragma once

#include "gsgtrack/camera.hpp"
#include "gsgtrack/gaussian.hpp"
#include "gsgtrack/se3.hpp"

#include <vector>

namespace gsg {

struct RenderSettings {
  double near_plane = 1e-3;
  // Splats contribute within this Mahalanobis radius.
  double cutoff_sigma = 3.0;
  // Low-pass floor added to the 2D covariance diagonal, px^2.
  double covariance_floor = 0.3;
  // Per-pixel compositing stops once transmittance drops below this.
  double min_transmittance = 1e-4;
  int threads = 1;
};

struct SplatProjection {
  Vec2 mean;
  Mat2 covariance;
  double depth = 0;
};

// EWA projection of one Gaussian. Throws BehindCamera when the camera-frame
// depth is not beyond the near plane.
SplatProjection project_gaussian(const Gaussian& g, const Pose& pose, const Camera& cam,
                                 const RenderSettings& settings = {});

// Opacity falloff as a function of squared Mahalanobis distance q. Equals 1
// at q = 0 and reaches 0 with zero slope at the cutoff, so the composite is
// continuously differentiable in every parameter.
double splat_falloff(double q, double cutoff_sigma);
double splat_falloff_derivative(double q, double cutoff_sigma);

struct RenderOutput {
  Image color;      // H x W x 3
  ScalarMap depth;  // alpha-blended camera depth, not normalized
  ScalarMap alpha;  // accumulated opacity (soft silhouette)
};

// Forward state needed by render_backward. Owned by one render/backward pair.
class RenderCache {
 public:
  bool valid() const { return valid_; }
  void invalidate() { valid_ = false; }
  const Pose& pose() const { return pose_; }
  const Camera& camera() const { return camera_; }
  std::size_t gaussian_count() const { return projected_.size(); }
  std::size_t entry_count() const { return entries_.size(); }
  // Visibility and 2D extent, used by density control and pruning.
  bool visible(std::size_t i) const { return projected_[i].visible; }
  double max_screen_sigma(std::size_t i) const { return projected_[i].max_sigma; }

 private:
  friend RenderOutput render(const std::vector<Gaussian>&, const Pose&, const Camera&,
                             RenderCache*, const RenderSettings&);
  friend struct RenderBackwardAccess;

  struct Projected {
    bool visible = false;
    Vec3 cam_point = Vec3::Zero();
    Vec2 mean = Vec2::Zero();
    Mat2 conic = Mat2::Zero();
    Mat3 cov3 = Mat3::Zero();   // world-frame covariance
    Mat3 cov_cam = Mat3::Zero();  // W cov3 W^T
    Eigen::Matrix<double, 2, 3> J = Eigen::Matrix<double, 2, 3>::Zero();
    double opacity = 0;
    double max_sigma = 0;
  };
  struct Entry {
    int gaussian;
    double q;      // squared Mahalanobis distance
    double alpha;  // falloff-modulated opacity
    double transmittance;  // before this entry
  };

  bool valid_ = false;
  Pose pose_;
  Camera camera_;
  RenderSettings settings_;
  std::vector<Projected> projected_;
  std::vector<std::size_t> pixel_begin_;  // CSR offsets, size H*W+1
  std::vector<std::uint32_t> pixel_used_;  // entries composited per pixel
  std::vector<Entry> entries_;
};

RenderOutput render(const std::vector<Gaussian>& gaussians, const Pose& pose, const Camera& cam,
                    RenderCache* cache = nullptr, const RenderSettings& settings = {});

struct RenderGradients {
  Vec6 pose = Vec6::Zero();  // left-multiplicative twist [rho; phi]
  std::vector<GaussianParams> gaussians;
  std::vector<Vec2> mean2d;  // dL/d(screen mean), for densification statistics
};

// Exact reverse-mode gradients of the compositing equations. Empty upstream
// rasters are treated as zero. Throws MissingForwardCache when the cache was
// not filled by a render() of the same Gaussian list.
RenderGradients render_backward(const std::vector<Gaussian>& gaussians, const RenderCache& cache,
                                const Image& grad_color, const ScalarMap& grad_depth,
                                const ScalarMap& grad_alpha);

}  // namespace gsg
