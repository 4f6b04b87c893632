#pragma once

#include "gsgtrack/camera.hpp"
#include "gsgtrack/gaussian.hpp"
#include "gsgtrack/se3.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace gsg::testing {

inline Vec3 random_vec3(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

inline Twist random_twist(std::mt19937_64& rng, double max_angle, double max_trans) {
  std::uniform_real_distribution<double> u(-1, 1), a(0, max_angle);
  Vec3 axis(u(rng), u(rng), u(rng));
  while (axis.norm() < 1e-3) axis = Vec3(u(rng), u(rng), u(rng));
  return {max_trans * Vec3(u(rng), u(rng), u(rng)), axis.normalized() * a(rng)};
}

inline Pose random_pose(std::mt19937_64& rng, double max_angle = 3.0, double max_trans = 1.0) {
  return exp_map(random_twist(rng, max_angle, max_trans));
}

inline Camera small_camera(int w, int h, double f) {
  Camera c;
  c.fx = c.fy = f;
  c.cx = 0.5 * (w - 1) + 0.13;
  c.cy = 0.5 * (h - 1) - 0.07;
  c.width = w;
  c.height = h;
  return c;
}

// Anisotropic Gaussians scattered in front of an identity-ish camera, sized
// to cover a few pixels each at the given focal length.
inline std::vector<Gaussian> random_gaussians(std::mt19937_64& rng, int n, double depth = 1.0,
                                              double spread = 0.12) {
  std::uniform_real_distribution<double> u(0, 1), s(-1, 1);
  std::vector<Gaussian> gs;
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    g.center = Vec3(spread * s(rng), spread * s(rng), depth + 0.2 * s(rng));
    g.log_scale = Vec3(std::log(0.015 + 0.03 * u(rng)), std::log(0.015 + 0.03 * u(rng)),
                       std::log(0.015 + 0.03 * u(rng)));
    g.rotation = Vec4(s(rng), s(rng), s(rng), s(rng)).normalized() * (0.8 + 0.4 * u(rng));
    g.color = Vec3(u(rng), u(rng), u(rng));
    g.opacity_logit = logit(0.1 + 0.6 * u(rng));
    gs.push_back(g);
  }
  return gs;
}

// Central difference of a scalar function along one coordinate.
template <typename F>
double central_difference(F&& f, double h) {
  return (f(h) - f(-h)) / (2.0 * h);
}

inline double relative_error(double a, double b, double floor = 1e-9) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace gsg::testing
