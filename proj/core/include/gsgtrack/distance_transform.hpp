#pragma once

#include "gsgtrack/common.hpp"

namespace gsg {

// Returned everywhere when the mask has no true pixel.
inline constexpr double kEmptyMaskDistance = 1e6;

// Exact Euclidean distance (pixels) from every pixel to the nearest true
// pixel, via the separable lower-envelope algorithm. Zero on the mask.
ScalarMap euclidean_dt(const Mask& mask);
ScalarMap squared_euclidean_dt(const Mask& mask);

}  // namespace gsg
