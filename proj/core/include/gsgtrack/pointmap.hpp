#pragma once

#include "gsgtrack/common.hpp"

namespace gsg {

// Per-pixel 3D points with confidences, as produced by a stereo matcher.
// Invalid pixels carry NaN points and zero confidence.
struct PointMap {
  PointRaster points;    // H x W x 3
  ScalarMap confidence;  // H x W
  Mask valid;            // H x W

  int height() const { return points.height; }
  int width() const { return points.width; }
  bool usable(std::size_t p) const { return valid.at(p) && confidence.at(p) > 0; }
};

PointMap make_pointmap(int height, int width);

}  // namespace gsg
