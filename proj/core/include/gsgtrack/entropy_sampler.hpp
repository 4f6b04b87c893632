#pragma once

#include "gsgtrack/pointmap.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace gsg {

struct VoxelSampler {
  int grid_k = 16;      // K: image blocks per axis and voxels per column
  int levels = 256;     // L: gray levels for the block histograms
  int budget = 8000;    // target number of pointmap samples
  int interpolants = 2;  // extra points per sample pushed along -normal
};

// Shannon entropy (bits) of the quantized gray histogram of each of the
// K x K image blocks. Block (i, j) covers rows [i H/K, (i+1) H/K) and
// columns [j W/K, (j+1) W/K). Gray values are in [0,1] and quantized to
// min(L-1, floor(v L)).
Eigen::MatrixXd block_entropy(const ScalarMap& gray, int grid_k, int levels);

// Block containing coordinate v of n under that partition into k blocks.
int block_index(int v, int n, int k);

// Per-column sample quotas from block entropies: ceil(budget E_ij / sum E)
// over the columns flagged in `active`, or a uniform split when the active
// entropy sums to zero.
Eigen::MatrixXi entropy_quota(const Eigen::MatrixXd& entropy,
                              const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& active,
                              int budget);

struct PointSample {
  Vec3 point;
  Vec3 color;
  double confidence = 0;
  bool interpolated = false;
  int pixel = -1;  // source pixel index
};

struct SampleResult {
  std::vector<PointSample> samples;
  Eigen::MatrixXi quota;
  double voxel_edge = 0;
};

// Entropy-guided downsampling of a camera-frame pointmap (camera at the
// origin). Columns of the K x K x K grid are image blocks; the third axis
// bins depth over the cubic bounding box of the usable masked points,
// expanded by 5%. Throws EmptyInput when no masked pixel has confidence.
SampleResult sample_pointmap(const PointMap& pm, const Image& image, const Mask& mask,
                             const VoxelSampler& sampler, std::uint64_t seed);

// Unit normals from central differences of the pointmap, oriented towards
// the origin. Pixels without a usable neighbourhood get the view direction.
PointRaster pointmap_normals(const PointMap& pm, const Mask& mask);

}  // namespace gsg
