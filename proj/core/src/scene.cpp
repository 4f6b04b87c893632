#include "gsgtrack/scene.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace gsg {

namespace {

constexpr double kEps = 1e-9;
constexpr double kDeg = std::numbers::pi / 180.0;

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

Mat3 axis_rotation(int axis, double angle) {
  return Eigen::AngleAxisd(angle, Vec3::Unit(axis)).toRotationMatrix();
}

// Slab test against an axis-aligned box centred at the origin.
bool slab(const Vec3& o, const Vec3& d, const Vec3& half, double& t0, double& t1) {
  t0 = -std::numeric_limits<double>::infinity();
  t1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d(i)) < 1e-300) {
      if (std::abs(o(i)) > half(i)) return false;
      continue;
    }
    double a = (-half(i) - o(i)) / d(i), b = (half(i) - o(i)) / d(i);
    if (a > b) std::swap(a, b);
    t0 = std::max(t0, a);
    t1 = std::min(t1, b);
  }
  return t0 <= t1 && t1 > kEps;
}

double superquadric_field(const Vec3& p, const Vec3& half, double e) {
  double s = 0;
  for (int i = 0; i < 3; ++i) s += std::pow(std::abs(p(i) / half(i)), 2.0 / e);
  return s - 1.0;
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec s;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("scene spec: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "scene spec must be a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "family") s.family = v.get<std::string>();
      else if (k == "trajectory") s.trajectory = v.get<std::string>();
      else if (k == "frames") s.frames = v.get<int>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else if (k == "width") s.width = v.get<int>();
      else if (k == "height") s.height = v.get<int>();
      else if (k == "focal") s.focal = v.get<double>();
      else if (k == "object_scale") s.object_scale = v.get<double>();
      else if (k == "distance") s.distance = v.get<double>();
      else if (k == "orbit_step_deg") s.orbit_step_deg = v.get<double>();
      else if (k == "tilt_deg") s.tilt_deg = v.get<double>();
      else if (k == "jitter_rot_deg") s.jitter_rot_deg = v.get<double>();
      else if (k == "jitter_trans") s.jitter_trans = v.get<double>();
      else if (k == "low_texture") s.low_texture = v.get<bool>();
      else if (k == "texture_frequency") s.texture_frequency = v.get<double>();
      else throw Error(ErrorCode::ConfigError, "unknown scene spec key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("scene spec: ") + e.what());
  }
  return s;
}

std::string scene_spec_json(const SceneSpec& s) {
  nlohmann::json j = {{"family", s.family},
                      {"trajectory", s.trajectory},
                      {"frames", s.frames},
                      {"seed", s.seed},
                      {"width", s.width},
                      {"height", s.height},
                      {"focal", s.focal},
                      {"object_scale", s.object_scale},
                      {"distance", s.distance},
                      {"orbit_step_deg", s.orbit_step_deg},
                      {"tilt_deg", s.tilt_deg},
                      {"jitter_rot_deg", s.jitter_rot_deg},
                      {"jitter_trans", s.jitter_trans},
                      {"low_texture", s.low_texture},
                      {"texture_frequency", s.texture_frequency}};
  return j.dump(2);
}

std::optional<double> intersect_primitive(const SyntheticScene::Primitive& prim,
                                          const Vec3& origin, const Vec3& dir) {
  const Vec3 o = prim.rotation.transpose() * (origin - prim.center);
  const Vec3 d = prim.rotation.transpose() * dir;
  switch (prim.kind) {
    case SyntheticScene::Primitive::Sphere: {
      const double r = prim.half.x();
      const double a = d.squaredNorm(), b = o.dot(d), c = o.squaredNorm() - r * r;
      const double disc = b * b - a * c;
      if (disc < 0) return std::nullopt;
      const double sq = std::sqrt(disc);
      // Stable roots of a t^2 + 2 b t + c.
      const double q = b > 0 ? -(b + sq) : -(b - sq);
      double t0 = q / a, t1 = c / q;
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > kEps) return t0;
      if (t1 > kEps) return t1;
      return std::nullopt;
    }
    case SyntheticScene::Primitive::Box: {
      double t0, t1;
      if (!slab(o, d, prim.half, t0, t1)) return std::nullopt;
      return t0 > kEps ? t0 : t1;
    }
    case SyntheticScene::Primitive::Superquadric: {
      double t0, t1;
      if (!slab(o, d, prim.half, t0, t1)) return std::nullopt;
      t0 = std::max(t0, kEps);
      const int steps = 256;
      double prev_t = t0;
      double prev_f = superquadric_field(o + t0 * d, prim.half, prim.exponent);
      if (prev_f <= 0) return t0;
      for (int s = 1; s <= steps; ++s) {
        const double t = t0 + (t1 - t0) * s / steps;
        const double f = superquadric_field(o + t * d, prim.half, prim.exponent);
        if (f <= 0) {
          double lo = prev_t, hi = t;
          for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            (superquadric_field(o + mid * d, prim.half, prim.exponent) > 0 ? lo : hi) = mid;
          }
          return hi;
        }
        prev_t = t;
        prev_f = f;
      }
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<RayHit> SyntheticScene::intersect(const Vec3& origin, const Vec3& dir) const {
  std::optional<RayHit> best;
  for (const auto& prim : primitives) {
    const auto t = intersect_primitive(prim, origin, dir);
    if (t && (!best || *t < best->t)) best = RayHit{*t, origin + *t * dir};
  }
  return best;
}

bool SyntheticScene::inside(const Vec3& p) const {
  for (const auto& prim : primitives) {
    const Vec3 q = prim.rotation.transpose() * (p - prim.center);
    switch (prim.kind) {
      case Primitive::Sphere:
        if (q.norm() <= prim.half.x()) return true;
        break;
      case Primitive::Box:
        if ((q.cwiseAbs() - prim.half).maxCoeff() <= 0) return true;
        break;
      case Primitive::Superquadric:
        if (superquadric_field(q, prim.half, prim.exponent) <= 0) return true;
        break;
    }
  }
  return false;
}

Vec3 SyntheticScene::color_at(const Vec3& p) const {
  auto lattice = [&](long long x, long long y, long long z) -> const Vec3& {
    std::uint64_t h = static_cast<std::uint64_t>(x) * 0x9E3779B97F4A7C15ull ^
                      static_cast<std::uint64_t>(y) * 0xC2B2AE3D27D4EB4Full ^
                      static_cast<std::uint64_t>(z) * 0x165667B19E3779F9ull;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 32;
    return lattice_[h % lattice_.size()];
  };
  auto noise = [&](const Vec3& q) {
    const Vec3 f = q.array().floor();
    const Vec3 w = q - f;
    const long long x = static_cast<long long>(f.x()), y = static_cast<long long>(f.y()),
                    z = static_cast<long long>(f.z());
    Vec3 acc = Vec3::Zero();
    for (int c = 0; c < 8; ++c) {
      const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
      const double wt = (dx ? smooth(w.x()) : 1 - smooth(w.x())) *
                        (dy ? smooth(w.y()) : 1 - smooth(w.y())) *
                        (dz ? smooth(w.z()) : 1 - smooth(w.z()));
      acc += wt * lattice(x + dx, y + dy, z + dz);
    }
    return acc;
  };
  const double freq = spec.texture_frequency / spec.object_scale;
  const Vec3 n = 0.7 * noise(p * freq) + 0.3 * noise(p * (2.3 * freq) + Vec3(17.1, 3.3, 9.7));
  if (spec.low_texture) return Vec3(0.75, 0.55, 0.35) + 0.02 * (n - Vec3::Constant(0.5));
  return Vec3::Constant(0.1) + 0.8 * n;
}

ViewRender SyntheticScene::render_view(const Pose& pose, const Camera& cam) const {
  const int H = cam.height, W = cam.width;
  ViewRender out{Image(H, W, 3), Mask(H, W), ScalarMap(H, W),
                 PointRaster(H, W, 3, std::numeric_limits<double>::quiet_NaN())};
  const Mat3 Rt = pose.rotation().transpose();
  const Vec3 origin = -(Rt * pose.translation());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const Vec3 dir = Rt * cam.ray(x, y);
      const auto hit = intersect(origin, dir);
      if (!hit) continue;
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      out.mask.at(p) = 1;
      out.depth.at(p) = hit->t;
      set_point(out.object_points, p, hit->point);
      const Vec3 c = color_at(hit->point);
      for (int ch = 0; ch < 3; ++ch) out.image.at(p, ch) = c(ch);
    }
  }
  return out;
}

std::vector<Vec3> SyntheticScene::surface_points(int count, std::uint64_t seed) const {
  std::mt19937_64 rng(seed ^ 0x5bd1e995ull);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> unit(-1, 1);
  double bound = 0;
  for (const auto& prim : primitives) bound = std::max(bound, prim.center.norm() + prim.half.norm());
  std::vector<Vec3> pts;
  pts.reserve(count);
  for (int attempts = 0; static_cast<int>(pts.size()) < count && attempts < 50 * count;
       ++attempts) {
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    dir.normalize();
    // Random ray through the bounding sphere, aimed along -dir.
    Vec3 a = dir.unitOrthogonal(), b = dir.cross(a);
    const Vec3 origin = 3 * bound * dir + bound * (unit(rng) * a + unit(rng) * b);
    if (const auto hit = intersect(origin, -dir)) pts.push_back(hit->point);
  }
  return pts;
}

double SyntheticScene::diameter() const { return diameter_; }

SyntheticScene generate_scene(const SceneSpec& spec) {
  if (spec.frames < 1 || spec.width < 8 || spec.height < 8 || !(spec.focal > 0) ||
      !(spec.object_scale > 0) || !(spec.distance > spec.object_scale * 2)) {
    throw Error(ErrorCode::BadSpec, "scene spec out of range");
  }
  SyntheticScene scene;
  scene.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0, 1);
  const double s = spec.object_scale;
  using P = SyntheticScene::Primitive;
  if (spec.family == "sphere") {
    scene.primitives.push_back({P::Sphere, Vec3::Zero(), Vec3::Constant(s)});
  } else if (spec.family == "box") {
    const Vec3 half(1.0, 0.55 + 0.2 * u01(rng), 0.4 + 0.2 * u01(rng));
    scene.primitives.push_back({P::Box, Vec3::Zero(), s * half});
  } else if (spec.family == "superquadric") {
    const Vec3 half(1.0, 0.65 + 0.15 * u01(rng), 0.5 + 0.15 * u01(rng));
    scene.primitives.push_back({P::Superquadric, Vec3::Zero(), s * half, Mat3::Identity(),
                                0.35 + 0.2 * u01(rng)});
  } else if (spec.family == "blob") {
    scene.primitives.push_back({P::Sphere, Vec3::Zero(), Vec3::Constant(0.6 * s)});
    std::normal_distribution<double> normal(0, 1);
    for (int i = 0; i < 3; ++i) {
      Vec3 d(normal(rng), normal(rng), normal(rng));
      d.normalize();
      const double r = 0.3 + 0.15 * u01(rng);
      scene.primitives.push_back({P::Sphere, s * (0.95 - r) * d, Vec3::Constant(s * r)});
    }
  } else {
    throw Error(ErrorCode::BadSpec, "unknown primitive family '" + spec.family + "'");
  }
  if (spec.trajectory != "orbit" && spec.trajectory != "jitter") {
    throw Error(ErrorCode::BadSpec, "unknown trajectory kind '" + spec.trajectory + "'");
  }

  scene.lattice_.resize(4096);
  for (auto& c : scene.lattice_) c = Vec3(u01(rng), u01(rng), u01(rng));

  scene.camera.fx = scene.camera.fy = spec.focal;
  scene.camera.cx = 0.5 * (spec.width - 1);
  scene.camera.cy = 0.5 * (spec.height - 1);
  scene.camera.width = spec.width;
  scene.camera.height = spec.height;

  const double phase = 360.0 * u01(rng);
  std::normal_distribution<double> normal(0, 1);
  for (int k = 0; k < spec.frames; ++k) {
    const Mat3 R = axis_rotation(0, spec.tilt_deg * kDeg) *
                   axis_rotation(1, (phase + k * spec.orbit_step_deg) * kDeg);
    Pose pose(R, Vec3(0, 0, spec.distance));
    if (spec.trajectory == "jitter") {
      const Twist j{spec.jitter_trans * Vec3(normal(rng), normal(rng), normal(rng)),
                    spec.jitter_rot_deg * kDeg * Vec3(normal(rng), normal(rng), normal(rng))};
      pose = pose.retract(j);
    }
    scene.trajectory.push_back(pose);
  }

  const auto pts = scene.surface_points(600, spec.seed);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      scene.diameter_ = std::max(scene.diameter_, (pts[i] - pts[j]).norm());
  return scene;
}

}  // namespace gsg
