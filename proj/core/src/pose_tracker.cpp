#include "gsgtrack/pose_tracker.hpp"

#include "gsgtrack/distance_transform.hpp"

#include <cmath>

namespace gsg {

namespace {

struct Evaluated {
  double total = 0;
  Vec6 grad = Vec6::Zero();
  ViewLoss view;
};

Evaluated evaluate(const Pose& pose, const ObjectModel& model, const ViewTarget& view,
                   const LossWeights& w, const PosePrior* prior, const RenderSettings& rs) {
  Evaluated e;
  e.view = evaluate_view(model.gaussians, pose, view, w, true, rs);
  e.total = e.view.total;
  e.grad = e.view.grads.pose;
  if (prior) {
    // log(exp(x) T C^-1) ~ x + d to first order, so the gradient is 2 w I d.
    const Vec6 d = log_map_robust(pose * prior->center.inverse()).vector();
    e.total += prior->weight * d.dot(prior->information * d);
    e.grad += 2 * prior->weight * prior->information * d;
  }
  return e;
}

}  // namespace

PoseRefineResult refine_pose(const Pose& start, const ObjectModel& model, const ViewTarget& view,
                             const LossWeights& w, const PosePrior* prior,
                             const TrackSettings& s) {
  PoseRefineResult res;
  Pose pose = start;
  Evaluated cur = evaluate(pose, model, view, w, prior, s.render);
  res.initial_loss = cur.total;
  // Steps rotate about the model centroid c and then translate, so turning
  // the object in place is one coordinate rather than a narrow valley of
  // camera-centred rotation plus translation. With p = T c, the left twist
  // of a step (rho, phi) is (rho + p x phi, phi), i.e. xi = A(p) (rho, phi).
  Vec3 c = Vec3::Zero();
  for (const Gaussian& g : model.gaussians) c += g.center;
  if (!model.empty()) c /= static_cast<double>(model.size());
  const auto to_left = [](const Vec3& p) {
    Mat6 A = Mat6::Identity();
    A.block<3, 3>(0, 3) = skew(p);
    return A;
  };
  // Unit steps in z are one nominal learning-rate step per axis.
  Vec6 scale;
  scale << Vec3::Constant(s.lr_translation), Vec3::Constant(s.lr_rotation);
  const auto gradient_z = [&](const Pose& T, const Vec6& grad_left) -> Vec6 {
    return scale.cwiseProduct(to_left(T * c).transpose() * grad_left);
  };
  const auto prior_curvature = [&](const Pose& T) -> Mat6 {
    if (!prior) return Mat6::Zero();
    const Mat6 A = to_left(T * c) * scale.asDiagonal();
    return 2 * prior->weight * A.transpose() * prior->information * A;
  };
  Mat6 hinv = Mat6::Identity();
  bool fresh = true;
  Vec6 g = gradient_z(pose, cur.grad);
  for (int it = 0; it < s.max_iters; ++it) {
    res.iterations = it + 1;
    if (!(g.squaredNorm() > 0)) break;
    // The silhouette term jumps when the binarized render changes, so a
    // failed line search restarts from the preconditioned gradient before
    // giving up.
    if (fresh) hinv = (prior_curvature(pose) + g.norm() * Mat6::Identity()).inverse();
    const Vec6 dir = -hinv * g;
    const double slope = g.dot(dir);
    const Vec3 p = pose * c;
    bool accepted = false;
    double a = 1.0;
    Vec6 z;
    for (int k = 0; k <= s.max_backtracks; ++k, a *= 0.5) {
      z = a * dir;
      const Vec6 step = scale.cwiseProduct(z);
      const Mat3 dR = so3_exp(step.tail<3>());
      const Pose cand(dR * pose.rotation(), dR * (pose.translation() - p) + p + step.head<3>());
      Evaluated next = evaluate(cand, model, view, w, prior, s.render);
      if (next.total <= cur.total + 1e-4 * a * slope) {
        pose = cand;
        cur = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (fresh) break;
      fresh = true;
      continue;
    }
    const Vec6 g_new = gradient_z(pose, cur.grad);
    const Vec6 y = g_new - g;
    const double sy = z.dot(y);
    if (sy > 1e-12 * z.norm() * y.norm()) {
      if (fresh && !prior) hinv = Mat6::Identity() * (sy / y.squaredNorm());
      const Mat6 v = Mat6::Identity() - y * z.transpose() / sy;
      hinv = v.transpose() * hinv * v + z * z.transpose() / sy;
      fresh = false;
    }
    g = g_new;
    // A heavily damped step says the curvature model is off, not that the
    // iterate converged.
    if (a < 0.125) fresh = true;
    else if (scale.cwiseProduct(dir).norm() < s.tol) break;
  }
  res.pose = pose;
  res.final_loss = cur.total;
  res.view = std::move(cur.view);
  return res;
}

TrackResult track_frame(const TrackState& state, const ObjectModel& model, const Camera& cam,
                        const Image& image, const Mask& mask, const TrackSettings& s,
                        const Relocalizer& relocalize) {
  if (model.empty()) throw Error(ErrorCode::PreconditionFailed, "track_frame: empty model");
  if (count_true(mask) == 0) throw Error(ErrorCode::PreconditionFailed, "track_frame: empty mask");
  Pose pose = state.pose;
  if (!state.valid) {
    const auto p = relocalize ? relocalize() : std::nullopt;
    if (!p) throw Error(ErrorCode::PreconditionFailed, "track_frame: no pose to start from");
    pose = *p;
  }
  const ScalarMap dt = euclidean_dt(mask);
  const ViewTarget view{cam, &image, &mask, nullptr, &dt};
  const PoseRefineResult r = refine_pose(pose, model, view, {1.0, 0.0, s.lambda_s}, nullptr, s);

  TrackResult res;
  res.iterations = r.iterations;
  res.initial_loss = r.initial_loss;
  res.final_loss = r.final_loss;
  res.photometric = photometric_l1(r.view.render.color, image, mask).loss;
  res.state.pose = r.pose;
  res.state.frame_idx = state.frame_idx;
  res.lost = res.photometric > s.divergence_bound;
  res.state.valid = !res.lost;
  return res;
}

}  // namespace gsg
