#include "gsgtrack/losses.hpp"

#include "gsgtrack/distance_transform.hpp"

#include <algorithm>
#include <cmath>

namespace gsg {

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void require_shape(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::PreconditionFailed, what);
}

}  // namespace

ImageLoss photometric_l1(const Image& rendered, const Image& target, const Mask& mask) {
  require_shape(rendered.same_shape(target) && rendered.same_shape(mask) &&
                    rendered.channels == 3 && target.channels == 3,
                "photometric_l1: image, target and mask dimensions differ");
  ImageLoss out{0, Image(rendered.height, rendered.width, 3)};
  const std::size_t n = count_true(mask);
  if (n == 0) return out;
  const double norm = 1.0 / (3.0 * static_cast<double>(n));
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    if (!mask.at(p)) continue;
    for (int c = 0; c < 3; ++c) {
      const double r = rendered.at(p, c) - target.at(p, c);
      out.loss += std::abs(r);
      out.grad.at(p, c) = sign(r) * norm;
    }
  }
  out.loss *= norm;
  return out;
}

ImageLoss depth_l1(const ScalarMap& rendered_depth, const DepthSupervision& sup,
                   const Mask& mask) {
  require_shape(rendered_depth.same_shape(sup.depth) && rendered_depth.same_shape(sup.confidence) &&
                    rendered_depth.same_shape(mask),
                "depth_l1: depth, supervision and mask dimensions differ");
  ImageLoss out{0, ScalarMap(rendered_depth.height, rendered_depth.width)};
  double wsum = 0;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    if (mask.at(p) && sup.confidence.at(p) > 0) wsum += sup.confidence.at(p);
  }
  if (wsum <= 0) return out;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    const double c = sup.confidence.at(p);
    if (!mask.at(p) || c <= 0) continue;
    const double r = rendered_depth.at(p) - sup.depth.at(p);
    out.loss += c * std::abs(r);
    out.grad.at(p) = c * sign(r) / wsum;
  }
  out.loss /= wsum;
  return out;
}

Mask binarize(const ScalarMap& soft, double threshold) {
  Mask m(soft.height, soft.width);
  for (std::size_t p = 0; p < m.pixel_count(); ++p) m.at(p) = soft.at(p) > threshold ? 1 : 0;
  return m;
}

SilhouetteFields make_silhouette_fields(const Mask& gt_mask, const ScalarMap& gt_dt,
                                        const ScalarMap& rendered_alpha) {
  return {gt_mask, gt_dt, rendered_alpha, euclidean_dt(binarize(rendered_alpha))};
}

SilhouetteFields make_silhouette_fields(const Mask& gt_mask, const ScalarMap& rendered_alpha) {
  return make_silhouette_fields(gt_mask, euclidean_dt(gt_mask), rendered_alpha);
}

ImageLoss silhouette_loss(const SilhouetteFields& f) {
  require_shape(f.gt_mask.same_shape(f.gt_dt) && f.gt_mask.same_shape(f.rendered_soft) &&
                    f.gt_mask.same_shape(f.rendered_dt),
                "silhouette_loss: field dimensions differ");
  const std::size_t n = f.gt_mask.pixel_count();
  ImageLoss out{0, ScalarMap(f.gt_mask.height, f.gt_mask.width)};
  if (n == 0) return out;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t p = 0; p < n; ++p) {
    const double a = f.rendered_soft.at(p);
    const double outside = std::max(0.0, 2 * a - 1);
    const double missed = f.rendered_dt.at(p) * f.gt_mask.at(p);
    out.loss += f.gt_dt.at(p) * outside + missed * (1 - a);
    out.grad.at(p) = ((a > 0.5 ? 2 * f.gt_dt.at(p) : 0.0) - missed) * inv;
  }
  out.loss *= inv;
  return out;
}

}  // namespace gsg
