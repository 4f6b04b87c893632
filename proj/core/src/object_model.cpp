#include "gsgtrack/object_model.hpp"

#include "gsgtrack/kdtree.hpp"

#include <algorithm>
#include <cmath>

namespace gsg {

void ObjectModel::keep_if(const std::vector<bool>& keep) {
  std::size_t w = 0;
  for (std::size_t r = 0; r < gaussians.size(); ++r) {
    if (!keep[r]) continue;
    gaussians[w] = gaussians[r];
    insertion_epoch[w] = insertion_epoch[r];
    ++w;
  }
  gaussians.resize(w);
  insertion_epoch.resize(w);
}

void insert(ObjectModel& model, const std::vector<PointSample>& samples, int frame_idx,
            double max_scale) {
  if (samples.empty()) return;
  std::vector<Vec3> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back(s.point);
  const KdTree tree(pts);
  const double hi = std::max(max_scale, 1e-4);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto hit = tree.nearest(pts[i], static_cast<int>(i));
    const double d = hit.index >= 0 ? std::sqrt(hit.sq_dist) : hi * 2.0;
    const double sigma = std::clamp(0.5 * d, 1e-4, hi);
    model.push_back(Gaussian::isotropic(pts[i], sigma, samples[i].color.cwiseMax(0).cwiseMin(1), 0.5),
                    frame_idx);
  }
}

std::vector<bool> mask_consistent(const ObjectModel& model, const std::vector<MaskReference>& refs,
                                  int new_since) {
  if (refs.empty()) throw Error(ErrorCode::PreconditionFailed, "prune_by_mask needs references");
  std::vector<bool> keep(model.size(), true);
  for (std::size_t i = 0; i < model.size(); ++i) {
    if (model.insertion_epoch[i] < new_since) continue;
    for (const auto& ref : refs) {
      const Vec3 pc = ref.pose * model.gaussians[i].center;
      if (pc.z() <= 0) continue;
      const Vec2 px = ref.cam.project(pc);
      const int x = static_cast<int>(std::lround(px.x())), y = static_cast<int>(std::lround(px.y()));
      const bool inside = ref.cam.contains(px) && x >= 0 && y >= 0 && x < ref.mask.width &&
                          y < ref.mask.height && ref.mask(y, x);
      if (!inside) {
        keep[i] = false;
        break;
      }
    }
  }
  return keep;
}

std::size_t prune_by_mask(ObjectModel& model, const std::vector<MaskReference>& refs,
                          int new_since) {
  const std::vector<bool> keep = mask_consistent(model, refs, new_since);
  model.keep_if(keep);
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), false));
}

std::vector<std::size_t> rotation_diverse_subset(const std::vector<Pose>& poses,
                                                 std::size_t count) {
  std::vector<std::size_t> picked;
  if (poses.empty() || count == 0) return picked;
  picked.push_back(poses.size() - 1);
  std::vector<double> dist(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    dist[i] = geodesic_rotation_distance(poses[i], poses.back());
  }
  dist.back() = -1;
  while (picked.size() < std::min(count, poses.size())) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < poses.size(); ++i) {
      if (dist[i] > dist[best]) best = i;
    }
    if (dist[best] < 0) break;
    picked.push_back(best);
    for (std::size_t i = 0; i < poses.size(); ++i) {
      dist[i] = std::min(dist[i], geodesic_rotation_distance(poses[i], poses[best]));
    }
    dist[best] = -1;
  }
  return picked;
}

}  // namespace gsg
