#include "gsgtrack/pipeline.hpp"

#include "gsgtrack/distance_transform.hpp"
#include "gsgtrack/io.hpp"
#include "gsgtrack/metrics.hpp"
#include "gsgtrack/model_optimizer.hpp"
#include "gsgtrack/pose_tracker.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <thread>

namespace gsg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kDeg = M_PI / 180;

void scale_points(PointMap& pm, double s) {
  for (double& v : pm.points.data) v *= s;
}

// Warps every channel of a pointmap with nearest sampling; pixels without a
// source become invalid.
PointMap warp_pointmap(const PointMap& pm, const CropMap& map, int h, int w) {
  PointMap out;
  out.points = warp_raster(pm.points, map, h, w, false, kNaN);
  out.confidence = warp_raster(pm.confidence, map, h, w, false, 0.0);
  out.valid = Mask(h, w);
  for (std::size_t p = 0; p < out.valid.pixel_count(); ++p) {
    const bool finite = std::isfinite(out.points.at(p, 0)) && std::isfinite(out.points.at(p, 1)) &&
                        std::isfinite(out.points.at(p, 2));
    out.valid.at(p) = finite && out.confidence.at(p) > 0;
    if (!out.valid.at(p)) out.confidence.at(p) = 0;
  }
  return out;
}

// Feeds graph insertion with pointmaps in the pipeline's metric scale.
class ScaledSource : public PairSource {
 public:
  ScaledSource(PairSource& inner, double scale) : inner_(inner), scale_(scale) {}
  std::optional<EdgeMatch> match(const GraphNode& u, const GraphNode& v) override {
    auto m = inner_.match(u, v);
    if (m) {
      scale_points(m->u, scale_);
      scale_points(m->v, scale_);
    }
    return m;
  }

 private:
  PairSource& inner_;
  double scale_;
};

// Camera-frame pointmap of a depth map, usable where the confidence reaches
// `min_conf` inside the mask.
PointMap depth_pointmap(const ScalarMap& depth, const ScalarMap& conf, const Mask& mask,
                        const Camera& cam, double min_conf) {
  PointMap pm = make_pointmap(cam.height, cam.width);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
      const double d = depth.at(p);
      if (!mask.at(p) || !(d > 0) || conf.at(p) < min_conf || !(conf.at(p) > 0)) continue;
      set_point(pm.points, p, d * cam.ray(x, y));
      pm.confidence.at(p) = conf.at(p);
      pm.valid.at(p) = 1;
    }
  return pm;
}

struct KeyView {
  int frame = 0;
  Pose pose;
  PreprocessedFrame data;
  DepthSupervision sup;
  bool has_sup = false;
  ScalarMap mask_dt;

  ViewTarget target() const {
    return {data.cam, &data.image, &data.mask, has_sup ? &sup : nullptr, &mask_dt};
  }
};

std::vector<PointSample> to_world(std::vector<PointSample> samples, const Pose& pose) {
  const Pose inv = pose.inverse();
  for (auto& s : samples) s.point = inv * s.point;
  return samples;
}

}  // namespace

CropMap crop_between(const Camera& original, const Camera& adjusted) {
  CropMap m;
  m.scale = adjusted.fx / original.fx;
  m.offset = Vec2(adjusted.cx - m.scale * original.cx, adjusted.cy - m.scale * original.cy);
  return m;
}

Raster<double> warp_raster(const Raster<double>& src, const CropMap& map, int out_h, int out_w,
                           bool bilinear, double fill) {
  Raster<double> out(out_h, out_w, src.channels, fill);
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < src.width && y < src.height; };
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Vec2 s = map.invert(Vec2(x, y));
      if (!bilinear) {
        const int sx = static_cast<int>(std::lround(s.x())), sy = static_cast<int>(std::lround(s.y()));
        if (!inside(sx, sy)) continue;
        for (int c = 0; c < src.channels; ++c) out(y, x, c) = src(sy, sx, c);
        continue;
      }
      const int x0 = static_cast<int>(std::floor(s.x())), y0 = static_cast<int>(std::floor(s.y()));
      const double ax = s.x() - x0, ay = s.y() - y0;
      for (int c = 0; c < src.channels; ++c) {
        double v = 0;
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i) {
            const double wgt = (i ? ax : 1 - ax) * (j ? ay : 1 - ay);
            if (wgt == 0) continue;
            v += wgt * (inside(x0 + i, y0 + j) ? src(y0 + j, x0 + i, c) : fill);
          }
        out(y, x, c) = v;
      }
    }
  return out;
}

PreprocessedFrame preprocess_frame(const Image& image, const Mask& mask, const Camera& cam,
                                   double scale, int out_w, int out_h) {
  if (!image.same_shape(mask)) {
    throw Error(ErrorCode::PreconditionFailed, "preprocess_frame: image and mask sizes differ");
  }
  if (!(scale > 0) || out_w <= 0 || out_h <= 0) {
    throw Error(ErrorCode::PreconditionFailed, "preprocess_frame: bad target size or scale");
  }
  Vec2 centroid = Vec2::Zero();
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(y, x)) {
        centroid += Vec2(x, y);
        ++n;
      }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "preprocess_frame: empty mask");
  centroid /= static_cast<double>(n);

  PreprocessedFrame f;
  // Pixel centres sit at integer coordinates, so the image centre is (w-1)/2.
  f.map.scale = scale;
  f.map.offset = Vec2(0.5 * (out_w - 1), 0.5 * (out_h - 1)) - scale * centroid;
  f.cam = cam;
  f.cam.fx = scale * cam.fx;
  f.cam.fy = scale * cam.fy;
  f.cam.cx = scale * cam.cx + f.map.offset.x();
  f.cam.cy = scale * cam.cy + f.map.offset.y();
  f.cam.width = out_w;
  f.cam.height = out_h;
  f.image = warp_raster(image, f.map, out_h, out_w, true, 0.0);
  Raster<double> indicator(mask.height, mask.width);
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) indicator.at(p) = mask.at(p);
  f.mask = binarize(warp_raster(indicator, f.map, out_h, out_w, true, 0.0), 0.5 - 1e-9);
  return f;
}

double init_scale(const PointMap& pm, const Mask& mask, const Vec2& s0, double min_confidence) {
  if (!pm.valid.same_shape(mask)) {
    throw Error(ErrorCode::PreconditionFailed, "init_scale: pointmap and mask sizes differ");
  }
  if (!(s0.x() > 0) || !(s0.y() > 0)) {
    throw Error(ErrorCode::PreconditionFailed, "init_scale: s0 must be positive");
  }
  int mx0 = mask.width, mx1 = -1, my0 = mask.height, my1 = -1;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  std::size_t used = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask(y, x)) continue;
      mx0 = std::min(mx0, x);
      mx1 = std::max(mx1, x);
      my0 = std::min(my0, y);
      my1 = std::max(my1, y);
      const std::size_t p = static_cast<std::size_t>(y) * mask.width + x;
      if (!pm.usable(p) || pm.confidence.at(p) < min_confidence) continue;
      const Vec3 q = point_at(pm.points, p);
      lo = lo.cwiseMin(q);
      hi = hi.cwiseMax(q);
      ++used;
    }
  if (mx1 <= mx0 || my1 <= my0) {
    throw Error(ErrorCode::DegenerateExtent, "init_scale: mask bounding box has zero area");
  }
  if (used == 0) throw Error(ErrorCode::PreconditionFailed, "init_scale: no pointmap pixel in the mask");
  const double w = hi.x() - lo.x(), h = hi.y() - lo.y();
  if (!(w > 0) || !(h > 0)) {
    throw Error(ErrorCode::DegenerateExtent, "init_scale: masked points span zero area");
  }
  return (w * s0.x() + h * s0.y()) / (w * w + h * h);
}

OraclePairSource::OraclePairSource(const SyntheticScene& scene, const NoiseProfile& noise,
                                   std::uint64_t seed)
    : scene_(scene), noise_(noise), seed_(seed) {
  noise_.validate();
}

std::optional<EdgeMatch> OraclePairSource::match(const GraphNode& u, const GraphNode& v) {
  NoiseProfile n = noise_;
  if (u.frame_idx == v.frame_idx) {
    // A frame paired with itself returns its own camera-frame pointmap.
    n.edge_offset = false;
    n.pair_failure_rate = 0;
  }
  const std::uint64_t seed = seed_ ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(u.frame_idx + 1)) ^
                             (0xC2B2AE3D27D4EB4FULL * static_cast<std::uint64_t>(v.frame_idx + 1));
  try {
    MatchedPair mp = match_views(scene_, scene_.trajectory.at(u.frame_idx), u.cam,
                                 scene_.trajectory.at(v.frame_idx), v.cam, n, seed);
    return EdgeMatch{std::move(mp.u), std::move(mp.v)};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NoOverlap) return std::nullopt;
    throw;
  }
}

DiskPairSource::DiskPairSource(const std::filesystem::path& dir, const Camera& original)
    : edges_(load_pointmaps(dir)), original_(original) {
  for (const auto& e : edges_) {
    if (!e.pm_u.valid.same_shape(original.height, original.width)) {
      throw Error(ErrorCode::FormatError, "pointmaps of edge " + std::to_string(e.u) + "_" +
                                              std::to_string(e.v) + " do not match the camera size");
    }
  }
}

std::optional<EdgeMatch> DiskPairSource::match(const GraphNode& u, const GraphNode& v) {
  for (const auto& e : edges_) {
    const bool fwd = e.u == u.frame_idx && e.v == v.frame_idx;
    const bool rev = e.u == v.frame_idx && e.v == u.frame_idx;
    if (!fwd && !rev) continue;
    const PointMap& a = fwd ? e.pm_u : e.pm_v;
    const PointMap& b = fwd ? e.pm_v : e.pm_u;
    return EdgeMatch{warp_pointmap(a, crop_between(original_, u.cam), u.cam.height, u.cam.width),
                     warp_pointmap(b, crop_between(original_, v.cam), v.cam.height, v.cam.width)};
  }
  return std::nullopt;
}

PipelineResult run_pipeline(const SequenceInput& in, const PipelineConfig& cfg, PairSource& pairs,
                            const std::function<void(const FrameLog&)>& on_frame) {
  cfg.validate();
  if (in.frames.empty()) throw Error(ErrorCode::EmptyInput, "run_pipeline: no frames");
  const int n_frames = static_cast<int>(in.frames.size());
  const int threads = cfg.threads > 0
                          ? cfg.threads
                          : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  RenderSettings rs;
  rs.threads = threads;
  const int out_w = cfg.crop_width > 0 ? cfg.crop_width : in.camera.width;
  const int out_h = cfg.crop_height > 0 ? cfg.crop_height : in.camera.height;

  auto prepare = [&](int k) {
    const SequenceFrame& f = in.frames[k];
    PreprocessedFrame p = preprocess_frame(f.image, f.mask, in.camera, cfg.crop_scale, out_w, out_h);
    if (in.rerender) {
      SequenceFrame r = in.rerender(k, p.cam);
      p.image = std::move(r.image);
      p.mask = std::move(r.mask);
    }
    return p;
  };

  PipelineResult res;
  MetricsReport& rep = res.report;
  res.trajectory.assign(n_frames, Pose());
  res.valid.assign(n_frames, false);
  GeoGraph& graph = res.graph;
  ObjectModel& model = res.model;

  // Frame 0: scale, world frame and model from the self-matched pointmap.
  auto key0 = std::make_unique<KeyView>();
  key0->data = prepare(0);
  key0->mask_dt = euclidean_dt(key0->data.mask);
  const PreprocessedFrame& f0 = key0->data;
  GraphNode n0;
  n0.cam = f0.cam;
  n0.mask = f0.mask;
  auto self = pairs.match(n0, n0);
  if (!self) throw Error(ErrorCode::EmptyInput, "frame 0 has no self-match");
  // s0 is measured on the input frame, so the scale is too: the same pixel
  // rays sample the object and no crop resampling enters the extent.
  GraphNode raw0;
  raw0.cam = in.camera;
  raw0.mask = in.frames[0].mask;
  const auto raw_self = pairs.match(raw0, raw0);
  if (!raw_self) throw Error(ErrorCode::EmptyInput, "frame 0 has no self-match");
  const double scale = init_scale(raw_self->u, raw0.mask, in.first_extent, cfg.min_confidence);
  PointMap pm0 = std::move(self->u);
  scale_points(pm0, scale);
  std::vector<Vec3> pts;
  for (std::size_t p = 0; p < pm0.valid.pixel_count(); ++p) {
    if (f0.mask.at(p) && pm0.usable(p) && pm0.confidence.at(p) >= cfg.min_confidence)
      pts.push_back(point_at(pm0.points, p));
  }
  if (pts.empty()) throw Error(ErrorCode::EmptyInput, "frame 0 pointmap has no confident pixel");
  Vec3 centroid = Vec3::Zero(), lo = pts[0], hi = pts[0];
  for (const Vec3& q : pts) {
    centroid += q;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  centroid /= static_cast<double>(pts.size());
  const double diameter = (hi - lo).norm();
  rep.scale = scale;
  rep.diameter_estimate = diameter;

  GraphSettings gs;
  gs.keyframe_angle = cfg.keyframe_angle_deg * kDeg;
  gs.max_edges = cfg.max_edges;
  gs.max_pair_angle = cfg.max_pair_angle_deg * kDeg;
  gs.use_pose_check = cfg.use_pose_check;
  gs.use_geometry_check = cfg.use_geometry_check;
  gs.use_confidence_check = cfg.use_confidence_check;
  gs.prune.tau_r = cfg.tau_r_deg * kDeg;
  gs.prune.tau_t = cfg.tau_t_fraction * 0.5 * diameter;
  gs.prune.tau_cd = cfg.tau_cd_fraction * diameter;
  gs.prune.tau_c = cfg.tau_c;
  gs.prune.min_confidence = cfg.min_confidence;
  gs.prune.seed = cfg.seed;
  GeoSolverSettings geo;
  geo.solver = cfg.solver == "adam" ? GeoSolver::Adam : GeoSolver::LevenbergMarquardt;
  geo.max_iterations = cfg.geo_iters;
  geo.min_confidence = cfg.min_confidence;
  VoxelSampler sampler;
  sampler.grid_k = cfg.grid_k;
  sampler.levels = cfg.gray_levels;
  sampler.budget = cfg.budget;
  sampler.interpolants = cfg.interpolants;
  ModelOptimizerSettings ms;
  ms.lr_position = cfg.lr_position;
  ms.lr_log_scale = cfg.lr_log_scale;
  ms.lr_rotation = cfg.lr_rotation;
  ms.lr_color = cfg.lr_color;
  ms.lr_opacity = cfg.lr_opacity;
  ms.lambda_depth = cfg.lambda_d;
  ms.lambda_silhouette = cfg.lambda_s;
  ms.density_interval = cfg.density_interval;
  ms.densify_grad_threshold = cfg.densify_grad_threshold;
  ms.split_screen_sigma = cfg.densify_size_threshold;
  ms.max_gaussians = static_cast<std::size_t>(cfg.max_gaussians);
  ms.seed = cfg.seed;
  ms.render = rs;
  TrackSettings ts;
  ts.max_iters = cfg.track_iters;
  ts.tol = cfg.track_tol;
  ts.lambda_s = cfg.lambda_s;
  ts.lr_rotation = cfg.track_lr_rotation;
  ts.lr_translation = cfg.track_lr_translation;
  ts.divergence_bound = cfg.divergence_bound;
  ts.render = rs;
  const double max_scale = cfg.max_scale_fraction * diameter;

  ScaledSource source(pairs, scale);
  const Pose T0(Mat3::Identity(), centroid);
  n0.pose = T0;
  n0.depth = ScalarMap(f0.cam.height, f0.cam.width);
  key0->sup.depth = ScalarMap(f0.cam.height, f0.cam.width);
  key0->sup.confidence = ScalarMap(f0.cam.height, f0.cam.width);
  for (std::size_t p = 0; p < pm0.valid.pixel_count(); ++p) {
    if (!f0.mask.at(p) || !pm0.usable(p) || pm0.confidence.at(p) < cfg.min_confidence) continue;
    const double z = pm0.points.at(p, 2);
    if (!(z > 0)) continue;
    n0.depth.at(p) = z;
    key0->sup.depth.at(p) = z;
    key0->sup.confidence.at(p) = pm0.confidence.at(p);
  }
  key0->has_sup = true;
  key0->pose = T0;
  add_frame(graph, n0, source, gs);

  PointMap init_pm = pm0;
  for (std::size_t p = 0; p < init_pm.valid.pixel_count(); ++p) {
    if (init_pm.confidence.at(p) < cfg.min_confidence) {
      init_pm.valid.at(p) = 0;
      init_pm.confidence.at(p) = 0;
    }
  }
  insert(model, to_world(sample_pointmap(init_pm, f0.image, f0.mask, sampler, cfg.seed).samples, T0),
         0, max_scale);
  ModelOptimizer opt(model, ms);
  for (int i = 0; i < cfg.init_iters; ++i) opt.step({T0, key0->target()});
  rep.init_psnr = psnr(render(model.gaussians, T0, f0.cam, nullptr, rs).color, f0.image, &f0.mask);

  std::vector<std::unique_ptr<KeyView>> keys;
  keys.push_back(std::move(key0));
  res.trajectory[0] = T0;
  res.valid[0] = true;
  {
    FrameLog lg;
    lg.keyframe = true;
    lg.tracked = T0;
    lg.gaussians = model.size();
    res.log.push_back(lg);
    if (on_frame) on_frame(lg);
  }

  Pose prev = T0;
  bool prev_valid = true;
  int keyframes_since_refine = 1;
  for (int k = 1; k < n_frames; ++k) {
    FrameLog lg;
    lg.frame = k;
    auto finish = [&](const Pose& pose, bool ok) {
      res.trajectory[k] = pose;
      res.valid[k] = ok;
      prev = pose;
      prev_valid = ok;
      lg.lost = !ok;
      lg.gaussians = model.size();
      res.log.push_back(lg);
      if (on_frame) on_frame(lg);
    };
    try {
      auto kv = std::make_unique<KeyView>();
      kv->frame = k;
      try {
        kv->data = prepare(k);
        kv->mask_dt = euclidean_dt(kv->data.mask);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyMask) throw;
        finish(prev, false);
        continue;
      }
      const PreprocessedFrame& f = kv->data;

      // Relocalization: match against the latest keyframe and chain the two
      // PnP poses of the fresh edge through that keyframe's pose.
      const Relocalizer relocalize = [&]() -> std::optional<Pose> {
        lg.relocalized = true;
        const GraphNode& u = graph.node(graph.keyframe_ids.back());
        GraphNode v;
        v.id = k;
        v.frame_idx = k;
        v.cam = f.cam;
        v.mask = f.mask;
        v.pose = u.pose;
        try {
          const auto m = source.match(u, v);
          if (!m) return std::nullopt;
          const Pose tu = edge_to_camera(m->u, u.cam, gs.prune, gs.prune.seed).pose;
          const Pose tv = edge_to_camera(m->v, v.cam, gs.prune, gs.prune.seed).pose;
          return tv * tu.inverse() * u.pose;
        } catch (const Error& e) {
          if (e.code() == ErrorCode::DegenerateCorrespondences) return std::nullopt;
          throw;
        }
      };
      TrackResult tr;
      try {
        tr = track_frame({prev, prev_valid, k}, model, f.cam, f.image, f.mask, ts, relocalize);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::PreconditionFailed) throw;
        finish(prev, false);
        continue;
      }
      lg.track_iterations = tr.iterations;
      if (tr.lost) {
        finish(tr.state.pose, false);
        continue;
      }
      Pose pose = tr.state.pose;
      lg.tracked = pose;

      GraphNode node;
      node.id = k;
      node.frame_idx = k;
      node.pose = pose;
      node.cam = f.cam;
      node.mask = f.mask;
      const AddFrameResult ar = add_frame(graph, std::move(node), source, gs);
      lg.keyframe = ar.keyframe;
      lg.edges = static_cast<int>(ar.new_edges.size());
      lg.rejected_pose = ar.rejected_pose;
      lg.rejected_geometry = ar.rejected_geometry;
      lg.rejected_confidence = ar.rejected_confidence;

      std::optional<PosePrior> prior;
      if (!graph.edges_of(k).empty()) {
        try {
          const GeoResult g = optimize_geometry(graph, k, geo);
          pose = g.pose;
          lg.graph_pose = g.pose;
          kv->sup = g.supervision;
          kv->has_sup = true;
          prior = PosePrior{g.pose, g.pose_information, cfg.pg_weight};
          lg.pg_loss = g.pg_loss;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::Disconnected) throw;
        }
      }
      kv->pose = pose;

      if (ar.keyframe && kv->has_sup && cfg.keyframe_budget > 0) {
        const PointMap pm = depth_pointmap(kv->sup.depth, kv->sup.confidence, f.mask, f.cam,
                                           cfg.min_confidence);
        VoxelSampler ks = sampler;
        ks.budget = cfg.keyframe_budget;
        try {
          const auto sr = sample_pointmap(pm, f.image, f.mask, ks, cfg.seed + k);
          insert(model, to_world(sr.samples, pose), k, max_scale);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptyInput) throw;
        }
      }

      // Joint refinement: model steps on keyframes interleaved with pose steps
      // anchored to the graph solution.
      const ScalarMap dt = euclidean_dt(f.mask);
      ViewTarget view = kv->target();
      view.mask_dt = &dt;
      const LossWeights pw{1.0, kv->has_sup ? cfg.lambda_d : 0.0, cfg.lambda_s};
      const PosePrior* pp = prior && cfg.pg_weight > 0 ? &*prior : nullptr;
      const int period = cfg.model_steps_per_pose_step + 1;
      if (ar.keyframe) {
        keys.push_back(std::move(kv));
        KeyView& cur = *keys.back();
        TrackSettings one = ts;
        one.max_iters = 1;
        int model_steps = 0, past = 0;
        for (int i = 0; i < cfg.joint_iters; ++i) {
          if (i % period == period - 1) {
            cur.pose = refine_pose(cur.pose, model, view, pw, pp, one).pose;
            continue;
          }
          const KeyView* kvp = &cur;
          if (model_steps++ % 2 == 1 && keys.size() > 1) {
            kvp = keys[static_cast<std::size_t>(past++) % (keys.size() - 1)].get();
          }
          opt.step({kvp->pose, kvp->target()});
        }
        pose = cur.pose;
        std::vector<Pose> kposes;
        for (const auto& kp : keys) kposes.push_back(kp->pose);
        std::vector<MaskReference> refs;
        for (std::size_t i :
             rotation_diverse_subset(kposes, static_cast<std::size_t>(cfg.prune_references))) {
          refs.push_back({keys[i]->pose, keys[i]->data.mask, keys[i]->data.cam});
        }
        const std::vector<bool> keep = mask_consistent(model, refs, k);
        lg.pruned = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
        opt.keep_if(keep);
      } else {
        const int steps = cfg.joint_iters / period;
        if (steps > 0) {
          TrackSettings many = ts;
          many.max_iters = steps;
          pose = refine_pose(pose, model, view, pw, pp, many).pose;
        }
        graph.remove_edges_of(k);
      }
      // A graph-optimized node keeps its own pose, so the structure stays at
      // its optimum; the refined pose goes to the trajectory.
      if (!lg.graph_pose) graph.node(k).pose = pose;
      if (ar.keyframe && cfg.history_interval > 0 && ++keyframes_since_refine >= cfg.history_interval) {
        refine_history(graph, geo);
        keyframes_since_refine = 0;
      }
      finish(pose, true);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::IoError || e.code() == ErrorCode::FormatError) {
        throw Error(e.code(), "frame " + std::to_string(k) + ": " + e.what());
      }
      throw;
    }
  }

  rep.frames = n_frames;
  rep.keyframes = static_cast<int>(graph.keyframe_ids.size());
  rep.lost_frames = static_cast<int>(std::count(res.valid.begin(), res.valid.end(), false));
  rep.pg_loss = pg_loss(graph, cfg.min_confidence);
  rep.gaussians = model.size();
  if (in.ground_truth) {
    std::vector<Vec3> centres;
    for (const auto& g : model.gaussians) centres.push_back(g.center);
    MetricsReport ev = evaluate_trajectory(res.trajectory, *in.ground_truth, &centres);
    ev.frames = rep.frames;
    ev.keyframes = rep.keyframes;
    ev.lost_frames = rep.lost_frames;
    ev.scale = rep.scale;
    ev.diameter_estimate = rep.diameter_estimate;
    ev.init_psnr = rep.init_psnr;
    ev.pg_loss = rep.pg_loss;
    ev.gaussians = rep.gaussians;
    rep = std::move(ev);
  }
  return res;
}

MetricsReport evaluate_trajectory(const std::vector<Pose>& trajectory, const GroundTruth& gt,
                                  const std::vector<Vec3>* model_centres) {
  if (trajectory.size() != gt.poses.size()) {
    throw Error(ErrorCode::LengthMismatch, "trajectory and ground truth lengths differ");
  }
  MetricsReport r;
  r.has_ground_truth = true;
  r.frames = static_cast<int>(trajectory.size());
  if (trajectory.empty()) return r;
  const std::vector<Pose> aligned = align_to_first_frame(trajectory, gt.poses);
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    const PoseError e = pose_error(gt.model_points, gt.poses[k], aligned[k]);
    r.add.push_back(e.add);
    r.adds.push_back(e.add_s);
    r.rot_err_deg.push_back(e.rot_err / kDeg);
    r.trans_err.push_back(e.trans_err);
    r.max_rot_err_deg = std::max(r.max_rot_err_deg, e.rot_err / kDeg);
    r.max_trans_err = std::max(r.max_trans_err, e.trans_err);
  }
  const double n = static_cast<double>(aligned.size());
  for (std::size_t k = 0; k < aligned.size(); ++k) {
    r.mean_add += r.add[k] / n;
    r.mean_adds += r.adds[k] / n;
  }
  r.auc_add = auc(r.add);
  r.auc_adds = auc(r.adds);
  const TrajectoryError te = ape_rpe(trajectory, gt.poses);
  r.ape = te.ape;
  r.rpe = te.rpe;
  if (model_centres && !model_centres->empty() && !gt.model_points.empty()) {
    // World -> object through the first frame: gt_0^-1 est_0.
    const Pose to_object = gt.poses[0].inverse() * trajectory[0];
    std::vector<Vec3> c;
    c.reserve(model_centres->size());
    for (const Vec3& p : *model_centres) c.push_back(to_object * p);
    r.chamfer = chamfer(c, gt.model_points);
  }
  return r;
}

void write_trajectory_json(const std::filesystem::path& path, const std::vector<Pose>& poses,
                           const std::vector<bool>& valid) {
  nlohmann::ordered_json j;
  j["frames"] = nlohmann::json::array();
  for (std::size_t k = 0; k < poses.size(); ++k) {
    nlohmann::ordered_json f;
    f["idx"] = k;
    f["valid"] = valid.empty() ? true : static_cast<bool>(valid[k]);
    f["pose"] = poses[k].row_major();
    j["frames"].push_back(f);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::vector<Pose> read_trajectory_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::vector<Pose> poses;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& f : j.at("frames")) {
      const auto v = f.at("pose").get<std::vector<double>>();
      if (v.size() != 12) throw Error(ErrorCode::FormatError, path.string() + ": pose needs 12 values");
      std::array<double, 12> a;
      std::copy(v.begin(), v.end(), a.begin());
      Pose p = Pose::from_row_major(a);
      poses.push_back(Pose(orthonormalize(p.rotation()), p.translation()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  return poses;
}

void write_tum(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  char line[256];
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const Vec3& t = poses[k].translation();
    Eigen::Quaterniond q = poses[k].quaternion();
    if (q.w() < 0) q.coeffs() *= -1;
    std::snprintf(line, sizeof line, "%zu %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", k, t.x(), t.y(),
                  t.z(), q.x(), q.y(), q.z(), q.w());
    out << line;
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

std::string report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["frames"] = r.frames;
  j["keyframes"] = r.keyframes;
  j["lost_frames"] = r.lost_frames;
  j["scale"] = r.scale;
  j["diameter_estimate"] = r.diameter_estimate;
  j["init_psnr"] = r.init_psnr;
  j["pg_loss"] = r.pg_loss;
  j["gaussians"] = r.gaussians;
  if (r.has_ground_truth) {
    j["mean_add"] = r.mean_add;
    j["mean_adds"] = r.mean_adds;
    j["auc_add"] = r.auc_add;
    j["auc_adds"] = r.auc_adds;
    j["max_rot_err_deg"] = r.max_rot_err_deg;
    j["max_trans_err"] = r.max_trans_err;
    j["ape"] = r.ape;
    j["rpe"] = r.rpe;
    j["chamfer"] = r.chamfer;
    j["add"] = r.add;
    j["adds"] = r.adds;
    j["rot_err_deg"] = r.rot_err_deg;
    j["trans_err"] = r.trans_err;
  }
  return j.dump(2);
}

void save_outputs(const std::filesystem::path& dir, const PipelineResult& result) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
  write_trajectory_json(dir / "trajectory.json", result.trajectory, result.valid);
  write_tum(dir / "trajectory.txt", result.trajectory);
  write_ply(dir / "model.ply", result.model.gaussians);
  save_graph(dir / "graph", result.graph);
  std::ofstream out(dir / "metrics.json");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "metrics.json").string());
  out << report_json(result.report) << '\n';
}

SequenceInput synthetic_sequence(const SyntheticScene& scene) {
  SequenceInput in;
  in.camera = scene.camera;
  for (int k = 0; k < static_cast<int>(scene.trajectory.size()); ++k) {
    ViewRender v = scene.render_frame(k);
    in.frames.push_back({std::move(v.image), std::move(v.mask)});
  }
  const ViewRender v0 = scene.render_frame(0);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (int y = 0; y < v0.depth.height; ++y)
    for (int x = 0; x < v0.depth.width; ++x) {
      if (!v0.mask(y, x)) continue;
      const Vec3 q = v0.depth(y, x) * scene.camera.ray(x, y);
      lo = lo.cwiseMin(q);
      hi = hi.cwiseMax(q);
    }
  in.first_extent = Vec2(hi.x() - lo.x(), hi.y() - lo.y());
  GroundTruth gt;
  gt.poses = scene.trajectory;
  gt.model_points = scene.surface_points(2000, scene.spec.seed);
  gt.diameter = scene.diameter();
  in.ground_truth = std::move(gt);
  in.rerender = [&scene](int k, const Camera& cam) {
    ViewRender v = scene.render_view(scene.trajectory.at(k), cam);
    return SequenceFrame{std::move(v.image), std::move(v.mask)};
  };
  return in;
}

}  // namespace gsg
