#pragma once

#include "gsgtrack/common.hpp"

#include <array>

namespace gsg {

// Tangent vector of SE(3). Stacked as [translational; rotational] wherever a
// 6-vector is needed (gradients, Jacobian columns, solver increments).
struct Twist {
  Vec3 translational = Vec3::Zero();
  Vec3 rotational = Vec3::Zero();

  static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
  Vec6 vector() const {
    Vec6 v;
    v << translational, rotational;
    return v;
  }
};

Mat3 skew(const Vec3& v);

// Rigid transform x' = R x + t. Object poses map object (world) coordinates
// into the camera frame. Increments are applied on the left: T <- exp(d) * T.
class Pose {
 public:
  Pose() = default;
  Pose(const Mat3& rotation, const Vec3& translation);

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t);
  // Row-major 3x4 [R|t], the serialized layout.
  static Pose from_row_major(const std::array<double, 12>& v);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_); }
  Mat4 matrix() const;
  std::array<double, 12> row_major() const;

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  Pose operator*(const Pose& o) const;
  Pose inverse() const;

  // Left-multiplicative retraction exp(d) * this.
  Pose retract(const Twist& d) const;

  bool is_valid(double tol = 1e-9) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& R);  // principal branch; throws AngleNearPi near pi
Vec3 so3_log_robust(const Mat3& R);  // quaternion-based, valid everywhere

Pose exp_map(const Twist& t);
Twist log_map(const Pose& p);         // throws AngleNearPi within 1e-6 of pi
Twist log_map_robust(const Pose& p);  // falls back to quaternion extraction

// d(exp(d) * mu)/dd at d = 0 for a camera-frame point mu: [I | -mu^x].
Mat36 pose_jacobian_point(const Pose& p, const Vec3& mu);

// d vec(W)/dd for the rotation block W of exp(d) * p. vec() stacks the
// columns of W: rows 3k..3k+2 are the derivative of column k, [0 | -W_k^x].
Mat96 pose_jacobian_rotation(const Pose& p);

double geodesic_rotation_distance(const Pose& a, const Pose& b);
double rotation_angle(const Mat3& R);

// Closest rotation in Frobenius norm (SVD projection with det +1).
Mat3 orthonormalize(const Mat3& R);

// Least-squares rigid alignment dst ~ R src + t (Kabsch / Umeyama, no scale).
Pose align_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                 const std::vector<double>* weights = nullptr);

}  // namespace gsg
