#include "gsgtrack/stereo_oracle.hpp"

#include "gsgtrack/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <regex>

namespace gsg {

void NoiseProfile::validate() const {
  auto bad = [](const char* what) { throw Error(ErrorCode::BadSpec, what); };
  if (!(depth_sigma >= 0)) bad("depth_sigma must be >= 0");
  if (!(outlier_rate >= 0 && outlier_rate < 1)) bad("outlier_rate must be in [0,1)");
  if (!(outlier_scale >= 0)) bad("outlier_scale must be >= 0");
  if (!(confidence_fidelity >= 0 && confidence_fidelity <= 1)) bad("fidelity must be in [0,1]");
  if (!(pair_failure_rate >= 0 && pair_failure_rate <= 1)) bad("pair_failure_rate in [0,1]");
  if (!(global_scale > 0)) bad("global_scale must be > 0");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Noisy camera-frame pointmap of one view, mapped through `to_edge`.
// Points are moved into camera u, scaled, then moved into the edge frame.
PointMap noisy_view(const ViewRender& view, const Camera& cam, const Pose& to_ref,
                    const Pose& offset, const NoiseProfile& noise, std::mt19937_64& rng, Mask& outliers) {
  const int H = cam.height, W = cam.width;
  PointMap pm = make_pointmap(H, W);
  outliers = Mask(H, W);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> unit(0, 1);
  for (std::size_t p = 0; p < view.mask.pixel_count(); ++p) {
    // Draw the same number of variates for every pixel so the noise of one
    // pixel does not depend on the mask elsewhere.
    const double n_depth = normal(rng);
    const double u_out = unit(rng), u_mag = unit(rng);
    const Vec3 n_dir(normal(rng), normal(rng), normal(rng));
    if (!view.mask.at(p)) continue;
    const int x = static_cast<int>(p % W), y = static_cast<int>(p / W);
    const Vec3 ray = cam.ray(x, y);
    const double depth = view.depth.at(p);
    Vec3 point = (depth + noise.depth_sigma * n_depth) * ray;
    double err = std::abs(noise.depth_sigma * n_depth) * ray.norm();
    if (u_out < noise.outlier_rate) {
      const Vec3 dir = n_dir.norm() > 1e-12 ? n_dir.normalized() : Vec3::UnitX();
      const Vec3 disp = noise.outlier_scale * (0.5 + 0.5 * u_mag) * dir;
      point = depth * ray + disp;
      err = disp.norm();
      outliers.at(p) = 1;
    }
    double faithful;
    if (noise.depth_sigma > 0) {
      faithful = 1.0 + 6.0 * std::exp(-err * err / (2 * noise.depth_sigma * noise.depth_sigma));
    } else {
      faithful = err > 0 ? 1.0 : 7.0;
    }
    const double f = noise.confidence_fidelity;
    set_point(pm.points, p, offset * (noise.global_scale * (to_ref * point)));
    pm.confidence.at(p) = f * faithful + (1 - f) * 5.0;
    pm.valid.at(p) = 1;
  }
  return pm;
}

void transform_points(PointMap& pm, const Pose& T) {
  for (std::size_t p = 0; p < pm.points.pixel_count(); ++p) {
    if (!pm.valid.at(p)) continue;
    set_point(pm.points, p, T * point_at(pm.points, p));
  }
}

}  // namespace

MatchedPair match_views(const SyntheticScene& scene, const Pose& pose_u, const Camera& cam_u,
                        const Pose& pose_v, const Camera& cam_v, const NoiseProfile& noise,
                        std::uint64_t seed) {
  noise.validate();
  const ViewRender vu = scene.render_view(pose_u, cam_u);
  const ViewRender vv = scene.render_view(pose_v, cam_v);
  if (count_true(vu.mask) == 0 || count_true(vv.mask) == 0) {
    throw Error(ErrorCode::NoOverlap, "a frame of the pair does not see the object");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> unit(0, 1);

  MatchedPair out;
  Pose offset;  // camera u -> edge frame
  {
    const Twist t{0.1 * Vec3(normal(rng), normal(rng), normal(rng)),
                  0.5 * Vec3(normal(rng), normal(rng), normal(rng))};
    if (noise.edge_offset) offset = exp_map(t);
  }
  out.edge_to_camera_u = offset.inverse();
  out.relative = pose_v * pose_u.inverse();
  const Pose v_to_u = pose_u * pose_v.inverse();
  out.u = noisy_view(vu, cam_u, Pose(), offset, noise, rng, out.outliers_u);
  out.v = noisy_view(vv, cam_v, v_to_u, offset, noise, rng, out.outliers_v);

  const double fail = unit(rng), kind = unit(rng), mag = unit(rng);
  if (fail < noise.pair_failure_rate) {
    // Flip about the object's vertical axis, push the reference depth, or
    // collapse the confidences.
    const Vec3 pivot = offset * (noise.global_scale * pose_u.translation());
    const Vec3 axis = offset.rotation() * pose_u.rotation().col(1);
    const double d = scene.diameter() * noise.global_scale;
    if (kind < 1.0 / 3) corrupt_pair(out, PairFailure::Flip, (40 + 60 * mag) * M_PI / 180, pivot, axis);
    else if (kind < 2.0 / 3) corrupt_pair(out, PairFailure::DepthPush, (0.15 + 0.2 * mag) * d, pivot);
    else corrupt_pair(out, PairFailure::LowConfidence, 0.3 + 0.8 * mag, pivot);
  }
  return out;
}

MatchedPair match_pair(const SyntheticScene& scene, int frame_u, int frame_v,
                       const NoiseProfile& noise, std::uint64_t seed) {
  return match_views(scene, scene.trajectory.at(frame_u), scene.camera,
                     scene.trajectory.at(frame_v), scene.camera, noise, seed);
}

void corrupt_pair(MatchedPair& pair, PairFailure kind, double amount, const Vec3& pivot,
                  const Vec3& axis) {
  pair.failure = kind;
  switch (kind) {
    case PairFailure::None:
      return;
    case PairFailure::Flip: {
      // Rigidly rotate the matched view's points about the pivot.
      const Mat3 R = Eigen::AngleAxisd(amount, axis.normalized()).toRotationMatrix();
      transform_points(pair.v, Pose(R, pivot - R * pivot));
      return;
    }
    case PairFailure::DepthPush: {
      // Move reference points along their own viewing rays: reprojection
      // into the reference camera is unchanged, the geometry is not.
      const Pose to_cam = pair.edge_to_camera_u;
      const Pose to_edge = to_cam.inverse();
      for (std::size_t p = 0; p < pair.u.points.pixel_count(); ++p) {
        if (!pair.u.valid.at(p)) continue;
        const Vec3 c = to_cam * point_at(pair.u.points, p);
        set_point(pair.u.points, p, to_edge * (c + amount * c.normalized()));
      }
      return;
    }
    case PairFailure::LowConfidence: {
      for (PointMap* pm : {&pair.u, &pair.v}) {
        double sum = 0;
        std::size_t n = 0;
        for (std::size_t p = 0; p < pm->confidence.pixel_count(); ++p) {
          if (!pm->valid.at(p)) continue;
          sum += pm->confidence.at(p);
          ++n;
        }
        if (n == 0 || sum <= 0) continue;
        const double k = amount / (sum / n);
        for (double& c : pm->confidence.data) c *= k;
      }
      return;
    }
  }
}

void save_pointmaps(const std::filesystem::path& dir, const std::vector<StoredEdge>& edges) {
  std::filesystem::create_directories(dir);
  for (const auto& e : edges) {
    const std::string stem = "edge_" + std::to_string(e.u) + "_" + std::to_string(e.v) + "_";
    write_raster(dir / (stem + "pts_u.gsgr"), e.pm_u.points);
    write_raster(dir / (stem + "pts_v.gsgr"), e.pm_v.points);
    write_raster(dir / (stem + "conf_u.gsgr"), e.pm_u.confidence);
    write_raster(dir / (stem + "conf_v.gsgr"), e.pm_v.confidence);
  }
}

std::vector<StoredEdge> load_pointmaps(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(ErrorCode::IoError, "not a directory: " + dir.string());
  }
  const std::regex name(R"(edge_(\d+)_(\d+)_(pts_u|pts_v|conf_u|conf_v)\.gsgr)");
  std::map<std::pair<int, int>, std::map<std::string, std::filesystem::path>> found;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string f = entry.path().filename().string();
    if (!std::regex_match(f, m, name)) continue;
    found[{std::stoi(m[1]), std::stoi(m[2])}][m[3]] = entry.path();
  }
  std::vector<StoredEdge> edges;
  for (const auto& [key, files] : found) {
    for (const char* part : {"pts_u", "pts_v", "conf_u", "conf_v"}) {
      if (!files.count(part)) {
        throw Error(ErrorCode::FormatError, "edge " + std::to_string(key.first) + "->" +
                                                std::to_string(key.second) + " lacks " + part);
      }
    }
    StoredEdge e;
    e.u = key.first;
    e.v = key.second;
    auto load = [&](PointMap& pm, const std::string& pts, const std::string& conf) {
      pm.points = read_raster(files.at(pts));
      pm.confidence = read_raster(files.at(conf));
      if (pm.points.channels != 3) {
        throw Error(ErrorCode::FormatError, files.at(pts).string() + ": expected 3 channels at byte offset 12");
      }
      if (pm.confidence.channels != 1) {
        throw Error(ErrorCode::FormatError, files.at(conf).string() + ": expected 1 channel at byte offset 12");
      }
      pm.valid = Mask(pm.points.height, pm.points.width);
      for (std::size_t p = 0; p < pm.valid.pixel_count(); ++p) {
        const bool finite = std::isfinite(pm.points.at(p, 0)) && std::isfinite(pm.points.at(p, 1)) &&
                            std::isfinite(pm.points.at(p, 2));
        pm.valid.at(p) = finite && pm.confidence.pixel_count() == pm.valid.pixel_count() &&
                         pm.confidence.at(p) > 0;
      }
    };
    load(e.pm_u, "pts_u", "conf_u");
    load(e.pm_v, "pts_v", "conf_v");
    const auto& a = e.pm_u.points;
    if (!a.same_shape(e.pm_u.confidence) || !a.same_shape(e.pm_v.points) ||
        !a.same_shape(e.pm_v.confidence)) {
      throw Error(ErrorCode::FormatError, "edge " + std::to_string(e.u) + "->" + std::to_string(e.v) +
                                              ": raster dimensions differ at byte offset 4");
    }
    edges.push_back(std::move(e));
  }
  return edges;
}

}  // namespace gsg
