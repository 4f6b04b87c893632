#pragma once

#include "gsgtrack/camera.hpp"
#include "gsgtrack/se3.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gsg {

struct SceneSpec {
  std::string family = "sphere";      // sphere | box | superquadric | blob
  std::string trajectory = "orbit";   // orbit | jitter
  int frames = 12;
  std::uint64_t seed = 1;
  int width = 64;
  int height = 64;
  double focal = 100;
  double object_scale = 0.1;          // unit-box object is scaled by this
  double distance = 0.5;              // camera to object centre
  double orbit_step_deg = 6.0;        // rotation between consecutive frames
  double tilt_deg = 20.0;             // elevation of the orbit
  double jitter_rot_deg = 1.0;        // per-frame noise for the jitter kind
  double jitter_trans = 0.003;
  bool low_texture = false;
  double texture_frequency = 3.0;     // value-noise cells per unit length
};

// Throws ConfigError on malformed JSON or unknown keys.
SceneSpec parse_scene_spec(const std::string& json);
std::string scene_spec_json(const SceneSpec& spec);

struct RayHit {
  double t = 0;  // ray parameter (camera depth for unit-z rays)
  Vec3 point;    // object frame
};

struct ViewRender {
  Image image;
  Mask mask;
  ScalarMap depth;  // camera z, 0 off the object
  PointRaster object_points;  // object-frame hit points, NaN off the object
};

// Analytic object made of primitives in object coordinates, with an unlit
// procedural value-noise texture, seen along a camera trajectory.
class SyntheticScene {
 public:
  struct Primitive {
    enum Kind { Sphere, Box, Superquadric } kind = Sphere;
    Vec3 center = Vec3::Zero();
    Vec3 half = Vec3::Ones();  // radius (sphere uses x) or half extents
    Mat3 rotation = Mat3::Identity();
    double exponent = 1.0;  // superquadric shape exponent
  };

  SceneSpec spec;
  std::vector<Primitive> primitives;
  Camera camera;
  std::vector<Pose> trajectory;  // object -> camera, one per frame

  // Closest intersection of origin + t dir (object frame, t > 0).
  std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir) const;
  bool inside(const Vec3& p) const;
  Vec3 color_at(const Vec3& p) const;

  ViewRender render_view(const Pose& pose, const Camera& cam) const;
  ViewRender render_frame(int k) const { return render_view(trajectory.at(k), camera); }

  // Points spread over the visible-from-outside surface, object frame.
  std::vector<Vec3> surface_points(int count, std::uint64_t seed = 0) const;
  double diameter() const;

 private:
  std::vector<Vec3> lattice_;  // value-noise colours
  friend SyntheticScene generate_scene(const SceneSpec& spec);
  double diameter_ = 0;
};

// Deterministic in spec.seed. Throws BadSpec for unknown families or
// trajectory kinds.
SyntheticScene generate_scene(const SceneSpec& spec);

// Ray against one primitive, object frame; exposed for oracle tests.
std::optional<double> intersect_primitive(const SyntheticScene::Primitive& prim,
                                          const Vec3& origin, const Vec3& dir);

}  // namespace gsg
