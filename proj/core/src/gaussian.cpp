#include "gsgtrack/gaussian.hpp"

namespace gsg {

Mat3 quaternion_to_matrix(const Vec4& q) {
  const double w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3 R;
  // clang-format off
  R << 1 - 2 * (y * y + z * z),     2 * (x * y - w * z),     2 * (x * z + w * y),
           2 * (x * y + w * z), 1 - 2 * (x * x + z * z),     2 * (y * z - w * x),
           2 * (x * z - w * y),     2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  // clang-format on
  return R;
}

Mat3 Gaussian::rotation_matrix() const { return quaternion_to_matrix(rotation.normalized()); }

Mat3 Gaussian::covariance() const {
  const Mat3 R = rotation_matrix();
  const Vec3 s2 = (2.0 * log_scale).array().exp();
  return R * s2.asDiagonal() * R.transpose();
}

GaussianParams Gaussian::params() const {
  GaussianParams p;
  p.segment<3>(param::kCenter) = center;
  p.segment<3>(param::kLogScale) = log_scale;
  p.segment<4>(param::kRotation) = rotation;
  p.segment<3>(param::kColor) = color;
  p(param::kOpacity) = opacity_logit;
  return p;
}

Gaussian Gaussian::from_params(const GaussianParams& p) {
  Gaussian g;
  g.center = p.segment<3>(param::kCenter);
  g.log_scale = p.segment<3>(param::kLogScale);
  g.rotation = p.segment<4>(param::kRotation);
  g.color = p.segment<3>(param::kColor);
  g.opacity_logit = p(param::kOpacity);
  return g;
}

Gaussian Gaussian::isotropic(const Vec3& center, double sigma, const Vec3& color,
                             double opacity) {
  Gaussian g;
  g.center = center;
  g.log_scale = Vec3::Constant(std::log(sigma));
  g.color = color;
  g.opacity_logit = logit(opacity);
  return g;
}

}  // namespace gsg
