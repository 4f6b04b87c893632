#include "gsgtrack/geo_graph.hpp"

#include "gsgtrack/io.hpp"
#include "gsgtrack/metrics.hpp"
#include "gsgtrack/stereo_oracle.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

namespace gsg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool confident(const PointMap& pm, std::size_t p, double min_conf) {
  return pm.usable(p) && pm.confidence.at(p) >= min_conf;
}

// Every k-th element so that at most `cap` remain; deterministic.
template <typename T>
std::vector<T> stride_subsample(const std::vector<T>& v, int cap) {
  if (cap <= 0 || static_cast<int>(v.size()) <= cap) return v;
  std::vector<T> out;
  out.reserve(cap);
  for (int i = 0; i < cap; ++i) out.push_back(v[static_cast<std::size_t>(i) * v.size() / cap]);
  return out;
}

}  // namespace

const GraphNode& GeoGraph::node(int id) const {
  const auto it = nodes.find(id);
  if (it == nodes.end()) throw Error(ErrorCode::PreconditionFailed, "no graph node " + std::to_string(id));
  return it->second;
}

GraphNode& GeoGraph::node(int id) {
  return const_cast<GraphNode&>(static_cast<const GeoGraph&>(*this).node(id));
}

std::vector<int> GeoGraph::edges_of(int id) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges[i].src == id || edges[i].dst == id) out.push_back(static_cast<int>(i));
  return out;
}

void GeoGraph::remove_edges_of(int id) {
  edges.erase(std::remove_if(edges.begin(), edges.end(),
                             [&](const GraphEdge& e) { return e.src == id || e.dst == id; }),
              edges.end());
}

PointRaster unproject_node(const GraphNode& node) {
  const int H = node.cam.height, W = node.cam.width;
  PointRaster out(H, W, 3, std::numeric_limits<double>::quiet_NaN());
  if (node.depth.empty()) return out;
  const Pose inv = node.pose.inverse();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * W + x;
      const double d = node.depth.at(p);
      if (!(d > 0) || (!node.mask.empty() && !node.mask.at(p))) continue;
      set_point(out, p, inv * (d * node.cam.ray(x, y)));
    }
  }
  return out;
}

double edge_confidence(const ScalarMap& conf_u, const ScalarMap& conf_v, const Mask& mask_u,
                       const Mask& mask_v) {
  if (!conf_u.same_shape(mask_u) || !conf_v.same_shape(mask_v)) {
    throw Error(ErrorCode::PreconditionFailed, "edge_confidence: shape mismatch");
  }
  auto masked_mean = [](const ScalarMap& c, const Mask& m) {
    double s = 0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < m.pixel_count(); ++p) {
      if (!m.at(p)) continue;
      const double v = c.at(p);
      if (std::isfinite(v)) s += v;
      ++n;
    }
    if (n == 0) throw Error(ErrorCode::ZeroMask, "edge_confidence: empty mask");
    return s / n;
  };
  return std::max(0.0, masked_mean(conf_u, mask_u) * masked_mean(conf_v, mask_v));
}

PnpResult edge_to_camera(const PointMap& pm, const Camera& cam, const PruneSettings& s,
                         std::uint64_t seed) {
  std::vector<std::size_t> pix;
  for (std::size_t p = 0; p < pm.valid.pixel_count(); ++p)
    if (confident(pm, p, s.min_confidence)) pix.push_back(p);
  pix = stride_subsample(pix, s.max_points);
  std::vector<Vec3> X;
  std::vector<Vec2> uv;
  for (std::size_t p : pix) {
    X.push_back(point_at(pm.points, p));
    uv.emplace_back(static_cast<double>(p % pm.width()), static_cast<double>(p / pm.width()));
  }
  return solve_pnp_ransac(X, uv, cam, s.pnp, seed);
}

PoseCheck check_pose_consistency(const GraphEdge& edge, const Camera& cam_u, const Camera& cam_v,
                                 const Pose& pose_u, const Pose& pose_v, const PruneSettings& s) {
  const Pose Tu = edge_to_camera(edge.pm_u, cam_u, s, s.seed).pose;
  const Pose Tv = edge_to_camera(edge.pm_v, cam_v, s, s.seed + 1).pose;
  const Pose est = Tv * Tu.inverse();
  const Pose ref = pose_v * pose_u.inverse();
  // Translations are compared where the object is, at the centroid of the
  // edge points in camera u, so rotation error does not leak in through the
  // camera distance.
  Vec3 centroid = Vec3::Zero();
  int n = 0;
  for (std::size_t p = 0; p < edge.pm_u.valid.pixel_count(); ++p) {
    if (!confident(edge.pm_u, p, s.min_confidence)) continue;
    centroid += point_at(edge.pm_u.points, p);
    ++n;
  }
  const Vec3 at = Tu * (n > 0 ? Vec3(centroid / n) : Vec3::Zero());
  PoseCheck c;
  c.rot_err = geodesic_rotation_distance(est, ref);
  c.trans_err = (est * at - ref * at).norm();
  c.keep = c.rot_err <= s.tau_r && c.trans_err <= s.tau_t;
  return c;
}

bool prune_pose_consistency(const GraphEdge& edge, const Camera& cam_u, const Camera& cam_v,
                            const Pose& pose_u, const Pose& pose_v, const PruneSettings& s) {
  return check_pose_consistency(edge, cam_u, cam_v, pose_u, pose_v, s).keep;
}

double edge_geometry_distance(const GraphEdge& edge, const GraphNode& ref, const PruneSettings& s) {
  std::vector<Vec3> a, b;
  for (std::size_t p = 0; p < edge.pm_u.valid.pixel_count(); ++p)
    if (confident(edge.pm_u, p, s.min_confidence))
      a.push_back(edge.edge_to_world * point_at(edge.pm_u.points, p));
  const PointRaster chi = unproject_node(ref);
  for (std::size_t p = 0; p < chi.pixel_count(); ++p)
    if (std::isfinite(chi.at(p, 0))) b.push_back(point_at(chi, p));
  if (a.empty() || b.empty()) return kInf;
  return chamfer(stride_subsample(a, s.max_points), stride_subsample(b, s.max_points), 0.0);
}

bool prune_geometry_similarity(const GraphEdge& edge, const GraphNode& ref, const PruneSettings& s) {
  return edge_geometry_distance(edge, ref, s) <= s.tau_cd;
}

bool prune_pixel_credibility(double mu, double tau_c) { return mu >= tau_c; }

namespace {

// Seeds depth of `node` from one edge side: z of T_v T_e2w X.
void seed_depth(GraphNode& node, const PointMap& pm, const Pose& e2w, double min_conf) {
  const int H = node.cam.height, W = node.cam.width;
  node.depth = ScalarMap(H, W);
  const Pose T = node.pose * e2w;
  for (std::size_t p = 0; p < node.depth.pixel_count(); ++p) {
    if (!confident(pm, p, min_conf) || (!node.mask.empty() && !node.mask.at(p))) continue;
    const double z = (T * point_at(pm.points, p)).z();
    if (z > 0) node.depth.at(p) = z;
  }
}

}  // namespace

AddFrameResult add_frame(GeoGraph& graph, GraphNode node, PairSource& source,
                         const GraphSettings& settings) {
  if (graph.nodes.count(node.id)) {
    throw Error(ErrorCode::PreconditionFailed, "duplicate graph node " + std::to_string(node.id));
  }
  AddFrameResult r;
  std::vector<std::pair<double, int>> by_angle;
  for (int k : graph.keyframe_ids)
    by_angle.emplace_back(geodesic_rotation_distance(graph.node(k).pose, node.pose), k);
  std::sort(by_angle.begin(), by_angle.end());
  r.keyframe = by_angle.empty() || by_angle.front().first >= settings.keyframe_angle;
  node.keyframe = r.keyframe;
  const int id = node.id;
  graph.nodes.emplace(id, std::move(node));
  if (r.keyframe) graph.keyframe_ids.push_back(id);

  const PruneSettings& ps = settings.prune;
  int best = -1;
  for (const auto& [angle, u] : by_angle) {
    if (r.queried >= settings.max_edges || angle > settings.max_pair_angle) break;
    ++r.queried;
    const GraphNode& U = graph.node(u);
    const GraphNode& V = graph.node(id);
    auto m = source.match(U, V);
    if (!m) continue;
    GraphEdge e;
    e.src = u;
    e.dst = id;
    e.pm_u = std::move(m->u);
    e.pm_v = std::move(m->v);
    try {
      e.confidence = edge_confidence(e.pm_u.confidence, e.pm_v.confidence,
                                     U.mask.empty() ? e.pm_u.valid : U.mask,
                                     V.mask.empty() ? e.pm_v.valid : V.mask);
      e.edge_to_world = U.pose.inverse() * edge_to_camera(e.pm_u, U.cam, ps, ps.seed).pose;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateCorrespondences && err.code() != ErrorCode::ZeroMask) throw;
      ++r.degenerate;
      continue;
    }
    bool keep = true;
    if (settings.use_pose_check) {
      bool ok;
      try {
        ok = prune_pose_consistency(e, U.cam, V.cam, U.pose, V.pose, ps);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::DegenerateCorrespondences) throw;
        ok = false;
      }
      if (!ok) ++r.rejected_pose;
      keep = keep && ok;
    }
    if (settings.use_geometry_check) {
      const bool ok = prune_geometry_similarity(e, U, ps);
      if (!ok) ++r.rejected_geometry;
      keep = keep && ok;
    }
    if (settings.use_confidence_check) {
      const bool ok = prune_pixel_credibility(e.confidence, ps.tau_c);
      if (!ok) ++r.rejected_confidence;
      keep = keep && ok;
    }
    if (!keep) continue;
    graph.edges.push_back(std::move(e));
    const int idx = static_cast<int>(graph.edges.size()) - 1;
    r.new_edges.push_back(idx);
    if (best < 0 || graph.edges[idx].confidence > graph.edges[best].confidence) best = idx;
  }
  GraphNode& V = graph.node(id);
  if (best >= 0) {
    seed_depth(V, graph.edges[best].pm_v, graph.edges[best].edge_to_world, ps.min_confidence);
  } else if (V.depth.empty()) {
    V.depth = ScalarMap(V.cam.height, V.cam.width);
  }
  return r;
}

namespace {

// Confidence-weighted point residuals over a set of edges, with a subset of
// node poses, all listed edge transforms and the depths of the listed nodes
// as unknowns. Depths are eliminated by a Schur complement in each step.
class GeoProblem {
 public:
  GeoProblem(GeoGraph& g, std::vector<int> edges, const std::vector<int>& free_poses,
             const std::set<int>& depth_nodes, const GeoSolverSettings& s)
      : g_(g), edges_(std::move(edges)), s_(s) {
    for (std::size_t i = 0; i < free_poses.size(); ++i) pose_block_[free_poses[i]] = static_cast<int>(i);
    n_pose_ = static_cast<int>(free_poses.size());
    for (int id : free_poses) poses_.push_back(g_.node(id).pose);
    for (int e : edges_) edge_T_.push_back(g_.edges[e].edge_to_world);
    build_terms(depth_nodes);
  }

  double cost() const { return cost_of(poses_, edge_T_, depth_); }
  bool empty() const { return terms_.empty(); }

  int solve(double& initial, double& final_cost) {
    initial = final_cost = cost();
    if (terms_.empty()) return 0;
    return s_.solver == GeoSolver::Adam ? run_adam(final_cost) : run_lm(final_cost);
  }

  // Gauss-Newton information of free pose block b with every other unknown
  // eliminated, at the current estimate.
  Mat6 pose_information(int b) const {
    const Linearization L = linearize();
    Eigen::MatrixXd S = L.H;
    for (std::size_t j = 0; j < L.Hjj.size(); ++j) {
      if (!(L.Hjj[j] > 0)) continue;
      for (const auto& [a, ha] : L.hj[j])
        for (const auto& [c, hc] : L.hj[j]) S.block<6, 6>(6 * a, 6 * c) -= ha * hc.transpose() / L.Hjj[j];
    }
    const int n = static_cast<int>(S.rows());
    std::vector<int> rest;
    for (int i = 0; i < n; ++i)
      if (i / 6 != b) rest.push_back(i);
    Mat6 spp = S.block<6, 6>(6 * b, 6 * b);
    if (rest.empty()) return spp;
    Eigen::MatrixXd srr(rest.size(), rest.size());
    Eigen::MatrixXd spr(6, rest.size());
    for (std::size_t i = 0; i < rest.size(); ++i) {
      spr.col(i) = S.block(6 * b, rest[i], 6, 1);
      for (std::size_t k = 0; k < rest.size(); ++k) srr(i, k) = S(rest[i], rest[k]);
    }
    srr.diagonal().array() += 1e-12 * (srr.diagonal().array().abs().maxCoeff() + 1);
    Mat6 info = spp - spr * srr.ldlt().solve(spr.transpose());
    return 0.5 * (info + info.transpose());
  }

  void write_back() {
    for (const auto& [id, b] : pose_block_) g_.node(id).pose = poses_[b];
    for (std::size_t k = 0; k < edges_.size(); ++k) g_.edges[edges_[k]].edge_to_world = edge_T_[k];
    for (std::size_t j = 0; j < depth_vars_.size(); ++j) {
      g_.node(depth_vars_[j].first).depth.at(depth_vars_[j].second) = depth_[j];
    }
  }

 private:
  struct Term {
    int edge;       // index into edges_
    int node;       // node id of this side
    std::size_t pixel;
    int var;        // depth variable or -1 when the depth is fixed
    double fixed_depth;
    Vec3 X;         // edge-frame point
    Vec3 ray;
    double w;
  };

  const Pose& node_pose(int id, const std::vector<Pose>& poses) const {
    const auto it = pose_block_.find(id);
    return it == pose_block_.end() ? g_.node(id).pose : poses[it->second];
  }

  void build_terms(const std::set<int>& depth_nodes) {
    std::map<std::pair<int, std::size_t>, int> var_of;
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const GraphEdge& e = g_.edges[edges_[k]];
      for (int side = 0; side < 2; ++side) {
        const int id = side == 0 ? e.src : e.dst;
        const PointMap& pm = side == 0 ? e.pm_u : e.pm_v;
        GraphNode& n = g_.node(id);
        if (n.depth.empty()) n.depth = ScalarMap(n.cam.height, n.cam.width);
        const bool free_depth = depth_nodes.count(id) > 0;
        const Pose& T = node_pose(id, poses_);
        for (std::size_t p = 0; p < pm.valid.pixel_count(); ++p) {
          if (!confident(pm, p, s_.min_confidence)) continue;
          if (!n.mask.empty() && !n.mask.at(p)) continue;
          const int x = static_cast<int>(p % n.cam.width), y = static_cast<int>(p / n.cam.width);
          Term t{static_cast<int>(k), id, p, -1, 0, point_at(pm.points, p), n.cam.ray(x, y),
                 s_.confidence_weights ? pm.confidence.at(p) : 1.0};
          double d = n.depth.at(p);
          if (!(d > 0) || !std::isfinite(d)) {
            if (!free_depth) continue;
            d = (T * (edge_T_[k] * t.X)).z();
            if (!(d > 0)) continue;
          }
          if (free_depth) {
            auto [it, fresh] = var_of.try_emplace({id, p}, static_cast<int>(depth_.size()));
            if (fresh) {
              depth_.push_back(d);
              depth_vars_.emplace_back(id, p);
            }
            t.var = it->second;
          } else {
            t.fixed_depth = d;
          }
          terms_.push_back(t);
        }
      }
    }
    std::stable_sort(terms_.begin(), terms_.end(),
                     [](const Term& a, const Term& b) { return a.var < b.var; });
  }

  Vec3 residual(const Term& t, const std::vector<Pose>& poses, const std::vector<Pose>& edges,
                const std::vector<double>& depth) const {
    const double d = t.var >= 0 ? depth[t.var] : t.fixed_depth;
    return node_pose(t.node, poses).inverse() * (d * t.ray) - edges[t.edge] * t.X;
  }

  double cost_of(const std::vector<Pose>& poses, const std::vector<Pose>& edges,
                 const std::vector<double>& depth) const {
    double c = 0;
    for (const auto& t : terms_) c += t.w * residual(t, poses, edges, depth).squaredNorm();
    return c;
  }

  int blocks() const { return n_pose_ + static_cast<int>(edges_.size()); }

  struct Linearization {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    std::vector<double> Hjj, bj;
    std::vector<std::vector<std::pair<int, Vec6>>> hj;  // per depth var
  };

  // Normal equations of the weighted squared residuals, depths kept apart.
  Linearization linearize() const {
    const int nb = blocks();
    Linearization L;
    L.H = Eigen::MatrixXd::Zero(6 * nb, 6 * nb);
    L.g = Eigen::VectorXd::Zero(6 * nb);
    L.Hjj.assign(depth_.size(), 0);
    L.bj.assign(depth_.size(), 0);
    L.hj.assign(depth_.size(), {});
    for (const auto& t : terms_) {
      const Pose& T = node_pose(t.node, poses_);
      const Mat3 Rt = T.rotation().transpose();
      const double d = t.var >= 0 ? depth_[t.var] : t.fixed_depth;
      const Vec3 y = d * t.ray;
      const Vec3 p = edge_T_[t.edge] * t.X;
      const Vec3 r = T.inverse() * y - p;
      int blk[2];
      Mat36 J[2];
      int nj = 0;
      const auto pb = pose_block_.find(t.node);
      if (pb != pose_block_.end()) {
        Mat36 Jp;
        Jp << -Mat3::Identity(), skew(y);
        J[nj] = Rt * Jp;
        blk[nj++] = pb->second;
      }
      J[nj] << -Mat3::Identity(), skew(p);
      blk[nj++] = n_pose_ + t.edge;
      for (int a = 0; a < nj; ++a) {
        L.g.segment<6>(6 * blk[a]) += t.w * J[a].transpose() * r;
        for (int b = 0; b < nj; ++b)
          L.H.block<6, 6>(6 * blk[a], 6 * blk[b]) += t.w * J[a].transpose() * J[b];
      }
      if (t.var >= 0) {
        const Vec3 Jd = Rt * t.ray;
        L.Hjj[t.var] += t.w * Jd.squaredNorm();
        L.bj[t.var] += t.w * Jd.dot(r);
        auto& list = L.hj[t.var];
        for (int a = 0; a < nj; ++a) {
          const Vec6 h = t.w * J[a].transpose() * Jd;
          auto it = std::find_if(list.begin(), list.end(), [&](const auto& e) { return e.first == blk[a]; });
          if (it == list.end()) list.emplace_back(blk[a], h);
          else it->second += h;
        }
      }
    }
    return L;
  }

  void apply(const Eigen::VectorXd& dp, const std::vector<double>& dd, std::vector<Pose>& poses,
             std::vector<Pose>& edges, std::vector<double>& depth) const {
    for (int b = 0; b < n_pose_; ++b)
      poses[b] = poses[b].retract(Twist::from_vector(dp.segment<6>(6 * b)));
    for (std::size_t k = 0; k < edges.size(); ++k)
      edges[k] = edges[k].retract(Twist::from_vector(dp.segment<6>(6 * (n_pose_ + k))));
    for (std::size_t j = 0; j < depth.size(); ++j) depth[j] += dd[j];
  }

  int run_lm(double& final_cost) {
    double current = cost();
    double lambda = s_.lambda_init;
    int it = 0;
    Linearization L = linearize();
    const int n = 6 * blocks();
    while (it < s_.max_iterations && current > 0) {
      ++it;
      Eigen::MatrixXd S = L.H;
      for (int i = 0; i < n; ++i) S(i, i) += lambda * L.H(i, i) + 1e-15;
      Eigen::VectorXd rhs = -L.g;
      std::vector<double> Hd(L.Hjj.size());
      for (std::size_t j = 0; j < Hd.size(); ++j) {
        Hd[j] = L.Hjj[j] * (1 + lambda) + 1e-15;
        const auto& list = L.hj[j];
        for (const auto& [a, ha] : list) {
          rhs.segment<6>(6 * a) += ha * (L.bj[j] / Hd[j]);
          for (const auto& [b, hb] : list) S.block<6, 6>(6 * a, 6 * b) -= ha * hb.transpose() / Hd[j];
        }
      }
      const Eigen::VectorXd dp = S.ldlt().solve(rhs);
      std::vector<double> dd(Hd.size());
      for (std::size_t j = 0; j < Hd.size(); ++j) {
        double s = L.bj[j];
        for (const auto& [a, ha] : L.hj[j]) s += ha.dot(dp.segment<6>(6 * a));
        dd[j] = -s / Hd[j];
      }
      auto poses = poses_;
      auto edges = edge_T_;
      auto depth = depth_;
      apply(dp, dd, poses, edges, depth);
      const double c = dp.allFinite() ? cost_of(poses, edges, depth) : kInf;
      if (c < current) {
        const double drop = current - c;
        poses_ = std::move(poses);
        edge_T_ = std::move(edges);
        depth_ = std::move(depth);
        current = c;
        lambda = std::max(lambda * 0.5, 1e-12);
        if (drop <= 1e-15 * c) break;
        L = linearize();
      } else {
        lambda *= 10;
        if (lambda > 1e12) break;
      }
    }
    final_cost = current;
    return it;
  }

  int run_adam(double& final_cost) {
    const int nb = blocks();
    const std::size_t nd = depth_.size();
    Eigen::VectorXd m = Eigen::VectorXd::Zero(6 * nb), v = m;
    std::vector<double> md(nd, 0), vd(nd, 0);
    double wsum = 0;
    for (const auto& t : terms_) wsum += t.w;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-12;
    double best = cost();
    auto best_poses = poses_;
    auto best_edges = edge_T_;
    auto best_depth = depth_;
    int it = 0;
    for (; it < s_.max_iterations; ++it) {
      const Linearization L = linearize();
      const Eigen::VectorXd g = L.g / wsum;
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g.cwiseProduct(g);
      const double c1 = 1 - std::pow(b1, it + 1), c2 = 1 - std::pow(b2, it + 1);
      Eigen::VectorXd dp(6 * nb);
      for (int i = 0; i < 6 * nb; ++i) {
        const double lr = i % 6 < 3 ? s_.adam_lr_translation : s_.adam_lr_rotation;
        dp(i) = -lr * (m(i) / c1) / (std::sqrt(v(i) / c2) + eps);
      }
      std::vector<double> dd(nd);
      for (std::size_t j = 0; j < nd; ++j) {
        const double gj = L.bj[j] / wsum;
        md[j] = b1 * md[j] + (1 - b1) * gj;
        vd[j] = b2 * vd[j] + (1 - b2) * gj * gj;
        dd[j] = -s_.adam_lr_depth * (md[j] / c1) / (std::sqrt(vd[j] / c2) + eps);
      }
      apply(dp, dd, poses_, edge_T_, depth_);
      const double c = cost();
      if (c < best) {
        best = c;
        best_poses = poses_;
        best_edges = edge_T_;
        best_depth = depth_;
      }
    }
    poses_ = best_poses;
    edge_T_ = best_edges;
    depth_ = best_depth;
    final_cost = best;
    return it;
  }

  GeoGraph& g_;
  std::vector<int> edges_;
  GeoSolverSettings s_;
  std::map<int, int> pose_block_;
  int n_pose_ = 0;
  std::vector<Pose> poses_;
  std::vector<Pose> edge_T_;
  std::vector<double> depth_;
  std::vector<std::pair<int, std::size_t>> depth_vars_;
  std::vector<Term> terms_;
};

}  // namespace

double pg_loss(const GeoGraph& graph, double min_confidence, const std::vector<int>* edges) {
  std::vector<int> all;
  if (!edges) {
    all.resize(graph.edges.size());
    std::iota(all.begin(), all.end(), 0);
    edges = &all;
  }
  double total = 0;
  for (int k : *edges) {
    const GraphEdge& e = graph.edges[k];
    for (int side = 0; side < 2; ++side) {
      const GraphNode& n = graph.node(side == 0 ? e.src : e.dst);
      const PointMap& pm = side == 0 ? e.pm_u : e.pm_v;
      if (n.depth.empty()) continue;
      const Pose inv = n.pose.inverse();
      for (std::size_t p = 0; p < pm.valid.pixel_count(); ++p) {
        if (!confident(pm, p, min_confidence)) continue;
        if (!n.mask.empty() && !n.mask.at(p)) continue;
        const double d = n.depth.at(p);
        if (!(d > 0)) continue;
        const int x = static_cast<int>(p % n.cam.width), y = static_cast<int>(p / n.cam.width);
        const Vec3 r = inv * (d * n.cam.ray(x, y)) - e.edge_to_world * point_at(pm.points, p);
        total += pm.confidence.at(p) * r.norm();
      }
    }
  }
  return total;
}

GeoResult optimize_geometry(GeoGraph& graph, int current, const GeoSolverSettings& settings) {
  const std::vector<int> active = graph.edges_of(current);
  if (active.empty()) {
    throw Error(ErrorCode::Disconnected, "node " + std::to_string(current) + " has no edges");
  }
  std::set<int> depth_nodes;
  for (int k : active) {
    depth_nodes.insert(graph.edges[k].src);
    depth_nodes.insert(graph.edges[k].dst);
  }
  GeoProblem problem(graph, active, {current}, depth_nodes, settings);
  if (problem.empty()) {
    throw Error(ErrorCode::Disconnected, "node " + std::to_string(current) + " has no usable pixels");
  }
  GeoResult res;
  res.iterations = problem.solve(res.initial_cost, res.final_cost);
  res.pose_information = problem.pose_information(0);
  problem.write_back();

  const GraphNode& n = graph.node(current);
  res.pose = n.pose;
  res.supervision.depth = n.depth;
  res.supervision.confidence = ScalarMap(n.cam.height, n.cam.width);
  for (int k : active) {
    const GraphEdge& e = graph.edges[k];
    const PointMap& pm = e.src == current ? e.pm_u : e.pm_v;
    for (std::size_t p = 0; p < pm.valid.pixel_count(); ++p) {
      if (!confident(pm, p, settings.min_confidence) || !(n.depth.at(p) > 0)) continue;
      auto& c = res.supervision.confidence.at(p);
      c = std::max(c, pm.confidence.at(p));
    }
  }
  res.pg_loss = pg_loss(graph, settings.min_confidence, &active);
  return res;
}

double refine_history(GeoGraph& graph, const GeoSolverSettings& settings) {
  std::vector<int> active;
  std::set<int> depth_nodes;
  for (std::size_t k = 0; k < graph.edges.size(); ++k) {
    const GraphEdge& e = graph.edges[k];
    if (!graph.node(e.src).keyframe || !graph.node(e.dst).keyframe) continue;
    active.push_back(static_cast<int>(k));
    depth_nodes.insert(e.src);
    depth_nodes.insert(e.dst);
  }
  if (active.empty()) return 0;
  GeoProblem problem(graph, active, {}, depth_nodes, settings);
  double initial, final_cost;
  problem.solve(initial, final_cost);
  problem.write_back();
  return final_cost;
}

namespace {

nlohmann::json pose_json(const Pose& p) { return p.row_major(); }

Pose pose_from_json(const nlohmann::json& j) {
  return Pose::from_row_major(j.get<std::array<double, 12>>());
}

}  // namespace

void save_graph(const std::filesystem::path& dir, const GeoGraph& graph) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& [id, n] : graph.nodes) {
    j["nodes"].push_back({{"id", id},
                          {"frame_idx", n.frame_idx},
                          {"keyframe", n.keyframe},
                          {"pose", pose_json(n.pose)},
                          {"camera",
                           {{"fx", n.cam.fx},
                            {"fy", n.cam.fy},
                            {"cx", n.cam.cx},
                            {"cy", n.cam.cy},
                            {"width", n.cam.width},
                            {"height", n.cam.height}}}});
    if (!n.depth.empty()) write_raster(dir / ("node_" + std::to_string(id) + "_depth.gsgr"), n.depth);
    if (!n.mask.empty()) write_mask_png(dir / ("node_" + std::to_string(id) + "_mask.png"), n.mask);
  }
  j["edges"] = nlohmann::json::array();
  std::vector<StoredEdge> stored;
  for (const auto& e : graph.edges) {
    j["edges"].push_back({{"src", e.src},
                          {"dst", e.dst},
                          {"confidence", e.confidence},
                          {"edge_to_world", pose_json(e.edge_to_world)}});
    stored.push_back({e.src, e.dst, e.pm_u, e.pm_v});
  }
  j["keyframe_ids"] = graph.keyframe_ids;
  save_pointmaps(dir / "pointmaps", stored);
  std::ofstream out(dir / "graph.json");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "graph.json").string());
  out << j.dump(2) << "\n";
}

GeoGraph load_graph(const std::filesystem::path& dir) {
  std::ifstream in(dir / "graph.json");
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + (dir / "graph.json").string());
  nlohmann::json j;
  GeoGraph g;
  try {
    in >> j;
    for (const auto& jn : j.at("nodes")) {
      GraphNode n;
      n.id = jn.at("id").get<int>();
      n.frame_idx = jn.at("frame_idx").get<int>();
      n.keyframe = jn.at("keyframe").get<bool>();
      n.pose = pose_from_json(jn.at("pose"));
      const auto& c = jn.at("camera");
      n.cam.fx = c.at("fx");
      n.cam.fy = c.at("fy");
      n.cam.cx = c.at("cx");
      n.cam.cy = c.at("cy");
      n.cam.width = c.at("width");
      n.cam.height = c.at("height");
      const auto depth = dir / ("node_" + std::to_string(n.id) + "_depth.gsgr");
      const auto mask = dir / ("node_" + std::to_string(n.id) + "_mask.png");
      if (std::filesystem::exists(depth)) n.depth = read_raster(depth);
      if (std::filesystem::exists(mask)) n.mask = read_mask_png(mask);
      g.nodes.emplace(n.id, std::move(n));
    }
    std::map<std::pair<int, int>, StoredEdge> pms;
    if (std::filesystem::exists(dir / "pointmaps"))
      for (auto& s : load_pointmaps(dir / "pointmaps")) pms[{s.u, s.v}] = std::move(s);
    for (const auto& je : j.at("edges")) {
      GraphEdge e;
      e.src = je.at("src").get<int>();
      e.dst = je.at("dst").get<int>();
      e.confidence = je.at("confidence").get<double>();
      e.edge_to_world = pose_from_json(je.at("edge_to_world"));
      const auto it = pms.find({e.src, e.dst});
      if (it == pms.end() || !g.nodes.count(e.src) || !g.nodes.count(e.dst)) {
        throw Error(ErrorCode::FormatError, "edge " + std::to_string(e.src) + "->" +
                                                std::to_string(e.dst) + " is incomplete");
      }
      e.pm_u = it->second.pm_u;
      e.pm_v = it->second.pm_v;
      g.edges.push_back(std::move(e));
    }
    g.keyframe_ids = j.at("keyframe_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("graph.json: ") + e.what());
  }
  return g;
}

}  // namespace gsg
