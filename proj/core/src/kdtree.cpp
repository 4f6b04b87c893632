#include "gsgtrack/kdtree.hpp"

#include <algorithm>
#include <numeric>

namespace gsg {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  build(0, static_cast<int>(order_.size()), 0);
}

void KdTree::build(int begin, int end, int depth) {
  if (end - begin <= 1) return;
  const int axis = depth % 3;
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a](axis), pb = points_[b](axis);
                     return pa < pb || (pa == pb && a < b);
                   });
  build(begin, mid, depth + 1);
  build(mid + 1, end, depth + 1);
}

KdTree::Hit KdTree::nearest(const Vec3& q, int exclude) const {
  Hit best;
  search(0, static_cast<int>(order_.size()), 0, q, exclude, best);
  return best;
}

void KdTree::search(int begin, int end, int depth, const Vec3& q, int exclude,
                    Hit& best) const {
  if (begin >= end) return;
  const int mid = (begin + end) / 2;
  const int idx = order_[mid];
  if (idx != exclude) {
    const double d = (points_[idx] - q).squaredNorm();
    if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) best = {idx, d};
  }
  const int axis = depth % 3;
  const double diff = q(axis) - points_[idx](axis);
  const bool left_first = diff < 0;
  if (left_first) {
    search(begin, mid, depth + 1, q, exclude, best);
    if (diff * diff <= best.sq_dist) search(mid + 1, end, depth + 1, q, exclude, best);
  } else {
    search(mid + 1, end, depth + 1, q, exclude, best);
    if (diff * diff <= best.sq_dist) search(begin, mid, depth + 1, q, exclude, best);
  }
}

}  // namespace gsg
