#pragma once

#include "gsgtrack/common.hpp"

namespace gsg {

// Pinhole intrinsics. Pixel (x, y) has its centre at continuous coordinate
// (x, y); rays and splats use the same convention.
struct Camera {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;

  bool is_valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx > 0 && cx < width && cy > 0 &&
           cy < height;
  }
  Vec2 project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }
  // Camera-frame direction with unit z through pixel coordinate (u, v).
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
  bool contains(const Vec2& px) const {
    return px.x() >= -0.5 && px.y() >= -0.5 && px.x() < width - 0.5 && px.y() < height - 0.5;
  }
  Mat3 K() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
  bool operator==(const Camera&) const = default;
};

}  // namespace gsg
