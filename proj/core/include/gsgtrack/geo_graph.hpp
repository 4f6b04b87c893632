#pragma once

#include "gsgtrack/camera.hpp"
#include "gsgtrack/losses.hpp"
#include "gsgtrack/pnp.hpp"
#include "gsgtrack/pointmap.hpp"
#include "gsgtrack/se3.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace gsg {

struct GraphNode {
  int id = 0;
  int frame_idx = 0;
  Pose pose;        // object (world) -> camera
  Camera cam;
  ScalarMap depth;  // camera z per pixel, <= 0 where unknown
  Mask mask;
  bool keyframe = false;
};

struct GraphEdge {
  int src = 0, dst = 0;     // u, v
  PointMap pm_u, pm_v;      // pixel-aligned with nodes u and v, edge frame
  Pose edge_to_world;       // T_e2w
  double confidence = 0;    // mu_edge
};

struct GeoGraph {
  std::map<int, GraphNode> nodes;
  std::vector<GraphEdge> edges;
  std::vector<int> keyframe_ids;  // insertion order

  const GraphNode& node(int id) const;
  GraphNode& node(int id);
  std::vector<int> edges_of(int id) const;
  void remove_edges_of(int id);
};

// World-frame points T_v^-1 (depth * ray); NaN where the depth is unknown or
// the mask is off.
PointRaster unproject_node(const GraphNode& node);

// Product of the two masked mean confidences. Throws ZeroMask when either
// mask is empty.
double edge_confidence(const ScalarMap& conf_u, const ScalarMap& conf_v, const Mask& mask_u,
                       const Mask& mask_v);

struct PruneSettings {
  double tau_r = 15.0 * M_PI / 180;  // radians
  double tau_t = 0.01;               // scene units (10% of object scale)
  double tau_cd = 0.01;              // scene units (5% of object diameter)
  double tau_c = 1.5;
  double min_confidence = 2.0;       // pixels below this are never used
  int max_points = 1500;             // subsampling cap for PnP and Chamfer
  PnpSettings pnp;
  std::uint64_t seed = 0;
};

// Pose of the edge frame in one node's camera from the pixel-aligned pointmap.
// Throws DegenerateCorrespondences when too few confident pixels survive.
PnpResult edge_to_camera(const PointMap& pm, const Camera& cam, const PruneSettings& s,
                         std::uint64_t seed);

struct PoseCheck {
  bool keep = false;
  double rot_err = 0;    // radians
  double trans_err = 0;  // scene units
};
// Relative pose u -> v from PnP on both sides of the edge, compared with the
// tracked relative pose T_v T_u^-1. The translation error is the distance
// between the two relative poses applied to the centroid of the edge points.
PoseCheck check_pose_consistency(const GraphEdge& edge, const Camera& cam_u, const Camera& cam_v,
                                 const Pose& pose_u, const Pose& pose_v, const PruneSettings& s);
bool prune_pose_consistency(const GraphEdge& edge, const Camera& cam_u, const Camera& cam_v,
                            const Pose& pose_u, const Pose& pose_v, const PruneSettings& s);

// Chamfer distance between T_e2w X^u and the reference node's unprojection.
double edge_geometry_distance(const GraphEdge& edge, const GraphNode& ref, const PruneSettings& s);
bool prune_geometry_similarity(const GraphEdge& edge, const GraphNode& ref, const PruneSettings& s);

bool prune_pixel_credibility(double edge_confidence, double tau_c);

// Source of stereo matches between two frames, both as seen by graph nodes.
// Pointmaps must already be in the pipeline's metric scale.
struct EdgeMatch {
  PointMap u, v;
};
class PairSource {
 public:
  virtual ~PairSource() = default;
  virtual std::optional<EdgeMatch> match(const GraphNode& u, const GraphNode& v) = 0;
};

struct GraphSettings {
  double keyframe_angle = 10.0 * M_PI / 180;
  int max_edges = 3;                      // partner keyframes per new frame
  double max_pair_angle = 75.0 * M_PI / 180;
  bool use_pose_check = true;
  bool use_geometry_check = true;
  bool use_confidence_check = true;
  PruneSettings prune;
};

struct AddFrameResult {
  bool keyframe = false;
  std::vector<int> new_edges;  // indices into graph.edges
  int queried = 0;
  int rejected_pose = 0, rejected_geometry = 0, rejected_confidence = 0, degenerate = 0;
};

// Inserts the node, decides keyframe status by rotation distance, queries the
// source against the nearest keyframes and keeps the edges passing every
// enabled predicate. Seeds the node's depth from its best edge.
AddFrameResult add_frame(GeoGraph& graph, GraphNode node, PairSource& source,
                         const GraphSettings& settings);

enum class GeoSolver { LevenbergMarquardt, Adam };

struct GeoSolverSettings {
  GeoSolver solver = GeoSolver::LevenbergMarquardt;
  int max_iterations = 300;
  double min_confidence = 2.0;
  bool confidence_weights = true;  // false: every used pixel weighs 1
  double lambda_init = 1e-4;
  double adam_lr_rotation = 2e-3;
  double adam_lr_translation = 2e-4;
  double adam_lr_depth = 2e-4;
};

struct GeoResult {
  Pose pose;                    // optimized current pose
  DepthSupervision supervision; // current frame depth and max edge confidence
  double initial_cost = 0;      // sum C |r|^2
  double final_cost = 0;
  double pg_loss = 0;           // sum C |r| over the active edges
  // Gauss-Newton information of sum C |r|^2 in the current pose, with the
  // edge transforms and depths marginalized out.
  Mat6 pose_information = Mat6::Zero();
  int iterations = 0;
};

// Minimizes the confidence-weighted point residuals of every edge touching
// `current` over the current pose, those edges' transforms and the depths of
// their endpoints. Other poses stay untouched. Throws Disconnected when the
// node has no edges.
GeoResult optimize_geometry(GeoGraph& graph, int current, const GeoSolverSettings& settings = {});

// Refines all edge transforms and keyframe depths with every pose frozen.
double refine_history(GeoGraph& graph, const GeoSolverSettings& settings = {});

// Sum over edges and both sides of C |chi - T_e2w X| for pixels with
// C >= min_confidence. All edges when `edges` is null.
double pg_loss(const GeoGraph& graph, double min_confidence = 2.0,
               const std::vector<int>* edges = nullptr);

// graph.json plus per-node depth and mask rasters and the edge pointmaps.
void save_graph(const std::filesystem::path& dir, const GeoGraph& graph);
GeoGraph load_graph(const std::filesystem::path& dir);

}  // namespace gsg
