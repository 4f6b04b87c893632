#include "gsgtrack/entropy_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace gsg {

int block_index(int v, int n, int k) {
  return static_cast<int>((static_cast<long long>(v + 1) * k + n - 1) / n - 1);
}

Eigen::MatrixXd block_entropy(const ScalarMap& gray, int grid_k, int levels) {
  if (gray.empty()) throw Error(ErrorCode::EmptyInput, "block_entropy: empty image");
  if (grid_k < 1 || grid_k > gray.height || grid_k > gray.width) {
    throw Error(ErrorCode::BadGrid, "grid_k " + std::to_string(grid_k) +
                                        " does not fit a " + std::to_string(gray.height) + "x" +
                                        std::to_string(gray.width) + " image");
  }
  if (levels < 2) throw Error(ErrorCode::BadGrid, "levels must be >= 2");
  const int K = grid_k, H = gray.height, W = gray.width;
  std::vector<std::vector<int>> hist(static_cast<std::size_t>(K) * K, std::vector<int>(levels, 0));
  std::vector<int> count(static_cast<std::size_t>(K) * K, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double v = std::clamp(gray(y, x), 0.0, 1.0);
      const int q = std::min(levels - 1, static_cast<int>(std::floor(v * levels)));
      const std::size_t b = static_cast<std::size_t>(block_index(y, H, K)) * K + block_index(x, W, K);
      ++hist[b][q];
      ++count[b];
    }
  }
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(K, K);
  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      const std::size_t b = static_cast<std::size_t>(i) * K + j;
      double e = 0;
      for (int c : hist[b]) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / count[b];
        e -= p * std::log2(p);
      }
      E(i, j) = e;
    }
  }
  return E;
}

Eigen::MatrixXi entropy_quota(const Eigen::MatrixXd& entropy,
                              const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& active,
                              int budget) {
  Eigen::MatrixXi quota = Eigen::MatrixXi::Zero(entropy.rows(), entropy.cols());
  double total = 0;
  int n_active = 0;
  for (Eigen::Index i = 0; i < entropy.size(); ++i) {
    if (!active(i)) continue;
    total += entropy(i);
    ++n_active;
  }
  if (n_active == 0) return quota;
  for (Eigen::Index i = 0; i < entropy.size(); ++i) {
    if (!active(i)) continue;
    const double share = total > 0 ? entropy(i) / total : 1.0 / n_active;
    quota(i) = static_cast<int>(std::ceil(budget * share - 1e-9));
  }
  return quota;
}

PointRaster pointmap_normals(const PointMap& pm, const Mask& mask) {
  const int H = pm.height(), W = pm.width();
  PointRaster normals(H, W, 3, 0.0);
  auto ok = [&](int y, int x) {
    if (y < 0 || x < 0 || y >= H || x >= W) return false;
    const std::size_t p = static_cast<std::size_t>(y) * W + x;
    return mask.at(p) && pm.usable(p);
  };
  auto pt = [&](int y, int x) { return point_at(pm.points, static_cast<std::size_t>(y) * W + x); };
  // Central difference where both neighbours exist, one-sided otherwise.
  auto diff = [&](int y, int x, int dy, int dx, Vec3& out) {
    const bool fwd = ok(y + dy, x + dx), bwd = ok(y - dy, x - dx);
    if (fwd && bwd) out = pt(y + dy, x + dx) - pt(y - dy, x - dx);
    else if (fwd) out = pt(y + dy, x + dx) - pt(y, x);
    else if (bwd) out = pt(y, x) - pt(y - dy, x - dx);
    else return false;
    return true;
  };
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!ok(y, x)) continue;
      const Vec3 p = pt(y, x);
      const Vec3 view = -p.normalized();
      Vec3 du, dv, n = view;
      if (diff(y, x, 0, 1, du) && diff(y, x, 1, 0, dv)) {
        const Vec3 c = du.cross(dv);
        if (c.norm() > 1e-12 * std::max(1.0, du.norm() * dv.norm())) {
          n = c.normalized();
          if (n.dot(view) < 0) n = -n;
        }
      }
      set_point(normals, static_cast<std::size_t>(y) * W + x, n);
    }
  }
  return normals;
}

SampleResult sample_pointmap(const PointMap& pm, const Image& image, const Mask& mask,
                             const VoxelSampler& sampler, std::uint64_t seed) {
  const int H = pm.height(), W = pm.width(), K = sampler.grid_k;
  if (!image.same_shape(H, W) || !mask.same_shape(H, W) || !pm.confidence.same_shape(H, W)) {
    throw Error(ErrorCode::PreconditionFailed, "sample_pointmap: dimension mismatch");
  }
  if (K < 2 || sampler.levels < 2 || sampler.budget < 1 || sampler.interpolants < 0) {
    throw Error(ErrorCode::BadGrid, "sample_pointmap: invalid sampler parameters");
  }
  std::vector<int> usable;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (std::size_t p = 0; p < pm.points.pixel_count(); ++p) {
    if (!mask.at(p) || !pm.usable(p)) continue;
    const Vec3 x = point_at(pm.points, p);
    if (!x.allFinite()) continue;
    usable.push_back(static_cast<int>(p));
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  if (usable.empty()) throw Error(ErrorCode::EmptyInput, "no masked pixel with confidence");

  // Cubic grid around the usable points.
  const Vec3 center = 0.5 * (lo + hi);
  const double side = std::max((hi - lo).maxCoeff() * 1.05, 1e-6);
  const double z0 = center.z() - 0.5 * side;
  const double edge = side / K;
  auto depth_bin = [&](double z) {
    return std::clamp(static_cast<int>(std::floor((z - z0) / edge)), 0, K - 1);
  };

  SampleResult out;
  out.voxel_edge = edge;
  const Eigen::MatrixXd E = block_entropy(to_grayscale(image), K, sampler.levels);
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> active =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(K, K, false);
  std::vector<std::vector<int>> columns(static_cast<std::size_t>(K) * K);
  for (int p : usable) {
    const int i = block_index(p / W, H, K), j = block_index(p % W, W, K);
    active(i, j) = true;
    columns[static_cast<std::size_t>(i) * K + j].push_back(p);
  }
  out.quota = entropy_quota(E, active, sampler.budget);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int cap = K / 2;
  const PointRaster normals = pointmap_normals(pm, mask);
  std::vector<int> voxel_count(static_cast<std::size_t>(K) * K * K, 0);
  auto color_at = [&](int p) { return Vec3(image.at(p, 0), image.at(p, 1), image.at(p, 2)); };

  for (int i = 0; i < K; ++i) {
    for (int j = 0; j < K; ++j) {
      auto& col = columns[static_cast<std::size_t>(i) * K + j];
      const int quota = out.quota(i, j);
      if (col.empty() || quota == 0) continue;
      // Weighted sampling without replacement: larger u^(1/w) first.
      std::vector<std::pair<double, int>> keys;
      keys.reserve(col.size());
      for (int p : col) {
        const double u = std::max(unit(rng), 1e-300);
        keys.emplace_back(std::log(u) / pm.confidence.at(p), p);
      }
      std::sort(keys.begin(), keys.end(),
                [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
      const std::size_t vbase = (static_cast<std::size_t>(i) * K + j) * K;
      int taken = 0;
      std::vector<int> chosen;
      for (const auto& [key, p] : keys) {
        if (taken >= quota) break;
        const int& slot = voxel_count[vbase + depth_bin(pm.points.at(p, 2))];
        if (slot >= cap) continue;
        ++voxel_count[vbase + depth_bin(pm.points.at(p, 2))];
        ++taken;
        chosen.push_back(p);
        out.samples.push_back({point_at(pm.points, p), color_at(p), pm.confidence.at(p), false, p});
      }
      for (int p : chosen) {
        const Vec3 x = point_at(pm.points, p);
        const Vec3 n = point_at(normals, p);
        for (int r = 0; r < sampler.interpolants; ++r) {
          const double offset = edge * (1.0 - unit(rng));  // (0, edge]
          const Vec3 y = x - offset * n;
          int& slot = voxel_count[vbase + depth_bin(y.z())];
          if (slot >= cap) continue;
          ++slot;
          out.samples.push_back({y, color_at(p), pm.confidence.at(p), true, p});
        }
      }
    }
  }
  return out;
}

}  // namespace gsg
