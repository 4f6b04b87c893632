#pragma once

#include "gsgtrack/common.hpp"

#include <cmath>

namespace gsg {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Flat parameter layout shared by gradients and the optimizer state.
inline constexpr int kGaussianParams = 14;
using GaussianParams = Eigen::Matrix<double, kGaussianParams, 1>;
namespace param {
inline constexpr int kCenter = 0;
inline constexpr int kLogScale = 3;
inline constexpr int kRotation = 6;  // quaternion w, x, y, z
inline constexpr int kColor = 10;
inline constexpr int kOpacity = 13;  // pre-sigmoid
}  // namespace param

struct Gaussian {
  Vec3 center = Vec3::Zero();
  Vec3 log_scale = Vec3::Constant(std::log(0.01));
  Vec4 rotation = Vec4(1, 0, 0, 0);  // w, x, y, z; normalized on use
  Vec3 color = Vec3::Constant(0.5);
  double opacity_logit = 0.0;

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
  Mat3 rotation_matrix() const;
  // R diag(scale^2) R^T
  Mat3 covariance() const;

  GaussianParams params() const;
  static Gaussian from_params(const GaussianParams& p);

  static Gaussian isotropic(const Vec3& center, double sigma, const Vec3& color, double opacity);
};

// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quaternion_to_matrix(const Vec4& q);

}  // namespace gsg
