#pragma once

#include "gsgtrack/common.hpp"

namespace gsg {

struct DepthSupervision {
  ScalarMap depth;       // D_gt, scene units
  ScalarMap confidence;  // C >= 0; zero disables a pixel
};

struct ImageLoss {
  double loss = 0;
  Raster<double> grad;  // same shape as the rendered input
};

// Mean absolute residual over masked pixels and all three channels.
ImageLoss photometric_l1(const Image& rendered, const Image& target, const Mask& mask);

// Confidence-weighted mean |D - D_gt| over masked pixels with C > 0.
ImageLoss depth_l1(const ScalarMap& rendered_depth, const DepthSupervision& sup,
                   const Mask& mask);

struct SilhouetteFields {
  Mask gt_mask;             // S
  ScalarMap gt_dt;          // D_S
  ScalarMap rendered_soft;  // S~, the accumulated alpha
  ScalarMap rendered_dt;    // D_S~, from S~ > 0.5, held constant for the gradient
};

SilhouetteFields make_silhouette_fields(const Mask& gt_mask, const ScalarMap& rendered_alpha);
// Same, reusing an already computed D_S.
SilhouetteFields make_silhouette_fields(const Mask& gt_mask, const ScalarMap& gt_dt,
                                        const ScalarMap& rendered_alpha);

// (1/|Omega|) sum_p D_S(p) h(S~(p)) + D_S~(p) S(p) (1 - S~(p)), with
// h(a) = max(0, 2a - 1). Rendered mass outside the target silhouette and
// target pixels the render misses are both charged by their distance to the
// other shape. On binary S~ this is D_S S~ + D_S~ S; for soft S~ it is zero
// exactly when the binarized render equals S, so blurred edges that
// binarize correctly add no bias.
ImageLoss silhouette_loss(const SilhouetteFields& f);

Mask binarize(const ScalarMap& soft, double threshold = 0.5);

}  // namespace gsg
