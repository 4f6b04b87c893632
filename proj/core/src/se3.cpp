#include "gsgtrack/se3.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace gsg {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<      0, -v.z(),  v.y(),
        v.z(),      0, -v.x(),
       -v.y(),  v.x(),      0;
  // clang-format on
  return s;
}

Pose::Pose(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

Pose Pose::from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
  return {q.normalized().toRotationMatrix(), t};
}

Pose Pose::from_row_major(const std::array<double, 12>& v) {
  Mat3 R;
  Vec3 t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R(r, c) = v[r * 4 + c];
    t(r) = v[r * 4 + 3];
  }
  return {R, t};
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

std::array<double, 12> Pose::row_major() const {
  std::array<double, 12> v{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) v[r * 4 + c] = rotation_(r, c);
    v[r * 4 + 3] = translation_(r);
  }
  return v;
}

Pose Pose::operator*(const Pose& o) const {
  return {rotation_ * o.rotation_, rotation_ * o.translation_ + translation_};
}

Pose Pose::inverse() const {
  Mat3 Rt = rotation_.transpose();
  return {Rt, -(Rt * translation_)};
}

Pose Pose::retract(const Twist& d) const { return exp_map(d) * *this; }

bool Pose::is_valid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const Mat3 e = rotation_ * rotation_.transpose() - Mat3::Identity();
  return e.cwiseAbs().maxCoeff() <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 W = skew(omega);
  double a, b;
  if (theta2 < 1e-16) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * W + b * W * W;
}

double rotation_angle(const Mat3& R) {
  // atan2 form stays accurate near 0 and pi where acos loses digits.
  const Vec3 axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (R.trace() - 1.0));
}

Vec3 so3_log(const Mat3& R) {
  const double theta = rotation_angle(R);
  if (std::numbers::pi - theta < 1e-6) {
    throw Error(ErrorCode::AngleNearPi, "rotation angle within 1e-6 of pi");
  }
  const Vec3 axis(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
  if (theta < 1e-8) return 0.5 * axis;
  return theta / (2.0 * std::sin(theta)) * axis;
}

Vec3 so3_log_robust(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() *= -1.0;
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double theta = 2.0 * std::atan2(s, q.w());
  return theta / s * v;
}

namespace {

// V(omega) maps translational twist to translation: t = V rho.
Mat3 left_jacobian(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const Mat3 W = skew(omega);
  double b, c;
  if (theta2 < 1e-16) {
    b = 0.5 - theta2 / 24.0;
    c = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    b = (1.0 - std::cos(theta)) / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + b * W + c * W * W;
}

Twist twist_from_rotation_log(const Pose& p, const Vec3& omega) {
  const Mat3 V = left_jacobian(omega);
  return {V.partialPivLu().solve(p.translation()), omega};
}

}  // namespace

Pose exp_map(const Twist& t) {
  return {so3_exp(t.rotational), left_jacobian(t.rotational) * t.translational};
}

Twist log_map(const Pose& p) { return twist_from_rotation_log(p, so3_log(p.rotation())); }

Twist log_map_robust(const Pose& p) {
  return twist_from_rotation_log(p, so3_log_robust(p.rotation()));
}

Mat36 pose_jacobian_point(const Pose& /*p*/, const Vec3& mu) {
  Mat36 J;
  J.leftCols<3>().setIdentity();
  J.rightCols<3>() = -skew(mu);
  return J;
}

Mat96 pose_jacobian_rotation(const Pose& p) {
  Mat96 J = Mat96::Zero();
  for (int k = 0; k < 3; ++k) {
    J.block<3, 3>(3 * k, 3) = -skew(p.rotation().col(k));
  }
  return J;
}

double geodesic_rotation_distance(const Pose& a, const Pose& b) {
  return rotation_angle(a.rotation().transpose() * b.rotation());
}

Mat3 orthonormalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

Pose align_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                 const std::vector<double>* weights) {
  if (src.size() != dst.size() || src.empty()) {
    throw Error(ErrorCode::PreconditionFailed, "align_rigid needs equal, non-empty sets");
  }
  double wsum = 0;
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    cs += w * src[i];
    cd += w * dst[i];
    wsum += w;
  }
  if (wsum <= 0) throw Error(ErrorCode::PreconditionFailed, "align_rigid: zero total weight");
  cs /= wsum;
  cd /= wsum;
  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    H += w * (dst[i] - cd) * (src[i] - cs).transpose();
  }
  const Mat3 R = orthonormalize(H);
  return {R, cd - R * cs};
}

}  // namespace gsg
