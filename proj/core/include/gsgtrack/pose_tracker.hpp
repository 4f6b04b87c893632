#pragma once

#include "gsgtrack/object_model.hpp"
#include "gsgtrack/objective.hpp"

#include <functional>
#include <optional>

namespace gsg {

struct TrackState {
  Pose pose;
  bool valid = false;
  int frame_idx = 0;
};

struct TrackSettings {
  int max_iters = 100;
  double tol = 1e-4;          // stop when the undamped step is shorter
  double lambda_s = 1.0;      // silhouette weight
  double lr_rotation = 0.01;  // first step length, radians
  double lr_translation = 0.002;
  int max_backtracks = 8;
  double divergence_bound = 0.5;  // masked mean L1 above this loses track
  RenderSettings render;
};

struct TrackResult {
  TrackState state;
  int iterations = 0;
  double initial_loss = 0;
  double final_loss = 0;
  double photometric = 0;  // masked mean L1 at the returned pose
  bool lost = false;
};

// Quadratic pull towards a reference pose: weight * d^T information d with
// d = log(T * center^-1) as a stacked twist.
struct PosePrior {
  Pose center;
  Mat6 information = Mat6::Zero();
  double weight = 1.0;
};

struct PoseRefineResult {
  Pose pose;
  int iterations = 0;
  double initial_loss = 0;
  double final_loss = 0;  // includes the prior
  ViewLoss view;          // image terms at the returned pose
};

// Minimizes the weighted view loss of `view` plus the optional prior over the
// pose alone, starting from `start`. Quasi-Newton (BFGS) steps with Armijo
// backtracking; the loss never increases between accepted iterates. A step
// turns the pose about the model centroid and then translates it, in
// learning-rate-scaled units. The first step is preconditioned by the
// prior's information when one is given.
PoseRefineResult refine_pose(const Pose& start, const ObjectModel& model, const ViewTarget& view,
                             const LossWeights& weights, const PosePrior* prior,
                             const TrackSettings& settings);

// Supplies an initial pose when the previous frame was lost.
using Relocalizer = std::function<std::optional<Pose>()>;

// Pose-only descent on L1 + lambda_s * silhouette from the previous pose, or
// from the relocalizer when the state is invalid, via refine_pose. A final
// masked L1 above the divergence bound marks the result lost (state.valid
// false).
// Throws PreconditionFailed for an empty model, an empty mask, or an
// invalid state without a relocalization pose.
TrackResult track_frame(const TrackState& state, const ObjectModel& model, const Camera& cam,
                        const Image& image, const Mask& mask, const TrackSettings& settings = {},
                        const Relocalizer& relocalize = {});

}  // namespace gsg
