#pragma once

#include "gsgtrack/losses.hpp"
#include "gsgtrack/splat_renderer.hpp"

namespace gsg {

struct LossWeights {
  double photometric = 1.0;
  double depth = 0.0;       // lambda_d
  double silhouette = 0.0;  // lambda_s
};

// One observed view: camera, target image and mask, optional depth
// supervision and an optional precomputed distance transform of the mask.
struct ViewTarget {
  Camera cam;
  const Image* image = nullptr;
  const Mask* mask = nullptr;
  const DepthSupervision* depth = nullptr;
  const ScalarMap* mask_dt = nullptr;
};

struct ViewLoss {
  double total = 0;
  double photometric = 0;
  double depth = 0;
  double silhouette = 0;
  RenderOutput render;
  RenderGradients grads;  // filled only when requested
};

// Weighted sum of the photometric, depth and silhouette terms for one view,
// with gradients through the renderer when `backward` is set.
ViewLoss evaluate_view(const std::vector<Gaussian>& gaussians, const Pose& pose,
                       const ViewTarget& view, const LossWeights& w, bool backward,
                       const RenderSettings& settings = {});

}  // namespace gsg
