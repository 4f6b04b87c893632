#include "gsgtrack/objective.hpp"

namespace gsg {

ViewLoss evaluate_view(const std::vector<Gaussian>& gaussians, const Pose& pose,
                       const ViewTarget& view, const LossWeights& w, bool backward,
                       const RenderSettings& settings) {
  if (!view.image || !view.mask) {
    throw Error(ErrorCode::PreconditionFailed, "evaluate_view needs an image and a mask");
  }
  ViewLoss out;
  RenderCache cache;
  out.render = render(gaussians, pose, view.cam, backward ? &cache : nullptr, settings);
  Image gc;
  ScalarMap gd, ga;

  if (w.photometric != 0) {
    ImageLoss l = photometric_l1(out.render.color, *view.image, *view.mask);
    out.photometric = l.loss;
    gc = std::move(l.grad);
    for (double& v : gc.data) v *= w.photometric;
  }
  if (w.depth != 0 && view.depth) {
    ImageLoss l = depth_l1(out.render.depth, *view.depth, *view.mask);
    out.depth = l.loss;
    gd = std::move(l.grad);
    for (double& v : gd.data) v *= w.depth;
  }
  if (w.silhouette != 0) {
    const SilhouetteFields f = view.mask_dt
                                   ? make_silhouette_fields(*view.mask, *view.mask_dt, out.render.alpha)
                                   : make_silhouette_fields(*view.mask, out.render.alpha);
    ImageLoss l = silhouette_loss(f);
    out.silhouette = l.loss;
    ga = std::move(l.grad);
    for (double& v : ga.data) v *= w.silhouette;
  }
  out.total = w.photometric * out.photometric + w.depth * out.depth + w.silhouette * out.silhouette;
  if (backward) {
    out.grads = render_backward(gaussians, cache, gc, gd, ga);
  }
  return out;
}

}  // namespace gsg
