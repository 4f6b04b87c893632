#pragma once

#include "gsgtrack/geo_graph.hpp"
#include "gsgtrack/object_model.hpp"
#include "gsgtrack/scene.hpp"
#include "gsgtrack/stereo_oracle.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gsg {

// Every tunable of a run. Keys of the JSON form are the member names.
struct PipelineConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware concurrency; 1: fully deterministic

  // Preprocessing: crop around the mask centroid and scale by K.
  double crop_scale = 1.0;
  int crop_width = 0;   // 0: input width
  int crop_height = 0;  // 0: input height

  // Iteration counts.
  int init_iters = 325;
  int joint_iters = 125;
  int geo_iters = 300;
  int track_iters = 100;
  double track_tol = 1e-4;
  int model_steps_per_pose_step = 4;

  // Gaussian optimizer.
  double lr_position = 0.000032;
  double lr_log_scale = 0.005;
  double lr_rotation = 0.001;
  double lr_color = 0.01;
  double lr_opacity = 0.05;
  int density_interval = 25;
  double densify_grad_threshold = 0.05;
  double densify_size_threshold = 3.0;  // px; larger candidates split
  int max_gaussians = 40000;
  double max_scale_fraction = 0.05;     // Gaussian sigma cap, of the diameter

  // Pose refinement.
  double track_lr_rotation = 0.01;
  double track_lr_translation = 0.002;
  double divergence_bound = 0.5;
  double lambda_d = 0.1;
  double lambda_s = 1.0;
  double pg_weight = 1000.0;  // weight of the graph anchor in pose refinement

  // Sampling.
  int grid_k = 16;
  int gray_levels = 256;
  int budget = 8000;          // frame-0 samples
  int keyframe_budget = 800;  // samples added per later keyframe
  int interpolants = 2;

  // Graph.
  double keyframe_angle_deg = 10.0;
  int max_edges = 3;
  double max_pair_angle_deg = 75.0;
  double min_confidence = 2.0;
  double tau_r_deg = 15.0;
  double tau_t_fraction = 0.1;    // of the object scale (half the diameter)
  double tau_cd_fraction = 0.05;  // of the object diameter
  double tau_c = 1.5;
  bool use_pose_check = true;
  bool use_geometry_check = true;
  bool use_confidence_check = true;
  std::string solver = "lm";  // lm | adam
  int history_interval = 10;  // keyframes between history refinements
  int prune_references = 3;

  // Throws ConfigError naming the first field out of range.
  void validate() const;
};

// One entry per PipelineConfig member, for JSON keys and CLI flags.
struct ConfigField {
  std::string name;
  std::string help;
  enum Kind { Int, Double, Bool, String, Seed } kind;
};
const std::vector<ConfigField>& config_fields();

// Throws ConfigError on malformed JSON, unknown keys, wrong types or values
// out of range. Missing keys keep their defaults.
PipelineConfig parse_config(const std::string& json, const PipelineConfig& base = {});
std::string config_json(const PipelineConfig& config);

// Pixel map of a crop: new = scale * old + offset.
struct CropMap {
  double scale = 1.0;
  Vec2 offset = Vec2::Zero();
  Vec2 apply(const Vec2& px) const { return scale * px + offset; }
  Vec2 invert(const Vec2& px) const { return (px - offset) / scale; }
};

// The crop that takes `original` intrinsics to `adjusted` ones.
CropMap crop_between(const Camera& original, const Camera& adjusted);

struct PreprocessedFrame {
  Image image;
  Mask mask;
  Camera cam;
  CropMap map;
};

// Centres the mask centroid in an out_w x out_h image scaled by `scale`, with
// the intrinsics left-multiplied by the matching affine pixel map. The image
// is resampled bilinearly and the mask by thresholding the resampled
// indicator at 0.5. Throws EmptyMask.
PreprocessedFrame preprocess_frame(const Image& image, const Mask& mask, const Camera& cam,
                                   double scale, int out_w, int out_h);

// Resamples a raster under a crop map; samples falling outside get `fill`.
Raster<double> warp_raster(const Raster<double>& src, const CropMap& map, int out_h, int out_w,
                           bool bilinear, double fill);

// Uniform factor s minimizing |s (w, h) - s0|^2, where (w, h) is the
// camera-frame x/y extent of the pointmap pixels inside the mask with
// confidence at least `min_confidence`, and s0 the known first-frame object
// extent in scene units. Throws DegenerateExtent when the mask or the masked
// points span zero area.
double init_scale(const PointMap& first_pointmap, const Mask& first_mask, const Vec2& s0,
                  double min_confidence = 0);

struct SequenceFrame {
  Image image;
  Mask mask;
};

struct GroundTruth {
  std::vector<Pose> poses;          // object -> original camera, per frame
  std::vector<Vec3> model_points;   // object frame
  double diameter = 0;
};

struct SequenceInput {
  std::vector<SequenceFrame> frames;
  Camera camera;
  Vec2 first_extent = Vec2::Zero();  // s0: object width and height at frame 0
  std::optional<GroundTruth> ground_truth;
  // Exact view of frame k for preprocessed intrinsics; used instead of
  // resampling when set (synthetic scenes).
  std::function<SequenceFrame(int, const Camera&)> rerender;
};

// Pairs from the synthetic stereo oracle at ground-truth poses, seen through
// the nodes' (preprocessed) cameras. A frame matched with itself yields a
// camera-frame pointmap (no edge offset).
class OraclePairSource : public PairSource {
 public:
  OraclePairSource(const SyntheticScene& scene, const NoiseProfile& noise, std::uint64_t seed);
  std::optional<EdgeMatch> match(const GraphNode& u, const GraphNode& v) override;

 private:
  const SyntheticScene& scene_;
  NoiseProfile noise_;
  std::uint64_t seed_;
};

// Pairs stored as GSGR pointmaps for the original frames, warped into the
// nodes' cameras. Either orientation of a stored edge answers a query.
class DiskPairSource : public PairSource {
 public:
  DiskPairSource(const std::filesystem::path& dir, const Camera& original);
  std::optional<EdgeMatch> match(const GraphNode& u, const GraphNode& v) override;

 private:
  std::vector<StoredEdge> edges_;
  Camera original_;
};

struct FrameLog {
  int frame = 0;
  bool keyframe = false;
  bool lost = false;
  bool relocalized = false;
  int track_iterations = 0;
  int edges = 0;
  int rejected_pose = 0, rejected_geometry = 0, rejected_confidence = 0;
  double pg_loss = 0;
  std::size_t gaussians = 0;
  std::size_t pruned = 0;
  Pose tracked;                   // after track_frame
  std::optional<Pose> graph_pose;  // after optimize_geometry, when it ran
};

struct MetricsReport {
  int frames = 0;
  int keyframes = 0;
  int lost_frames = 0;
  double scale = 0;           // applied to every pointmap
  double diameter_estimate = 0;
  double init_psnr = 0;       // masked, frame 0 after initialization
  double pg_loss = 0;         // over the final graph
  std::size_t gaussians = 0;
  // Present with ground truth.
  bool has_ground_truth = false;
  std::vector<double> add, adds, rot_err_deg, trans_err;
  double mean_add = 0, mean_adds = 0, auc_add = 0, auc_adds = 0;
  double max_rot_err_deg = 0, max_trans_err = 0;
  double ape = 0, rpe = 0;
  double chamfer = 0;
};

struct PipelineResult {
  // Object -> camera per frame. Cropping changes intrinsics only, so this is
  // the camera frame of the input as well.
  std::vector<Pose> trajectory;
  std::vector<bool> valid;
  ObjectModel model;
  GeoGraph graph;
  MetricsReport report;
  std::vector<FrameLog> log;
};

// The online loop. Frame 0 seeds scale, world frame, graph and model; each
// later frame is tracked, inserted into the graph, refined against it and
// used to grow the model when it is a keyframe. `on_frame` sees each frame's
// log as soon as it is complete. Throws ConfigError for an invalid config,
// EmptyInput when there are no frames or frame 0 has no self-match.
PipelineResult run_pipeline(const SequenceInput& input, const PipelineConfig& config,
                            PairSource& pairs,
                            const std::function<void(const FrameLog&)>& on_frame = {});

// Poses relative to the first frame's ground truth, then per-frame errors.
MetricsReport evaluate_trajectory(const std::vector<Pose>& trajectory, const GroundTruth& gt,
                                  const std::vector<Vec3>* model_centres = nullptr);

// Outputs. JSON trajectories hold {"frames": [{"idx", "valid", "pose"}]}
// with 12 row-major floats per pose; TUM lines are "idx tx ty tz qx qy qz qw".
void write_trajectory_json(const std::filesystem::path& path, const std::vector<Pose>& poses,
                           const std::vector<bool>& valid = {});
std::vector<Pose> read_trajectory_json(const std::filesystem::path& path);
void write_tum(const std::filesystem::path& path, const std::vector<Pose>& poses);
std::string report_json(const MetricsReport& report);

// trajectory.json, trajectory.txt, model.ply, metrics.json and graph/.
void save_outputs(const std::filesystem::path& dir, const PipelineResult& result);

// Synthetic sequence for a scene: original-camera frames, exact re-rendering
// and ground truth. s0 comes from the visible surface at frame 0. The
// scene must outlive the returned input.
SequenceInput synthetic_sequence(const SyntheticScene& scene);

}  // namespace gsg
