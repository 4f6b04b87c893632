#pragma once

#include "gsgtrack/common.hpp"

#include <limits>
#include <vector>

namespace gsg {

// Static 3D kd-tree over a point array (median splits, implicit layout).
// Queries are exact.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points);

  struct Hit {
    int index = -1;
    double sq_dist = std::numeric_limits<double>::infinity();
  };

  // Nearest point to q, optionally ignoring one index (self queries).
  Hit nearest(const Vec3& q, int exclude = -1) const;

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& point(int i) const { return points_[i]; }

 private:
  void build(int begin, int end, int depth);
  void search(int begin, int end, int depth, const Vec3& q, int exclude, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;  // permutation; node of [b,e) sits at (b+e)/2
};

}  // namespace gsg
