#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsg {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Mat96 = Eigen::Matrix<double, 9, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Every recoverable failure in the library is reported as a gsg::Error with a
// machine-readable code; callers that need to branch catch the subclass.
enum class ErrorCode {
  AngleNearPi,
  BehindCamera,
  MissingForwardCache,
  BadGrid,
  EmptyInput,
  TrackLost,
  PreconditionFailed,
  ZeroMask,
  DegenerateCorrespondences,
  Disconnected,
  BadSpec,
  NoOverlap,
  FormatError,
  LengthMismatch,
  EmptyMask,
  DegenerateExtent,
  ConfigError,
  IoError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Dense row-major raster with interleaved channels. Used for images, masks,
// depth maps, confidence maps and pointmaps alike.
template <typename T>
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<T> data;

  Raster() = default;
  Raster(int h, int w, int c = 1, T fill = T{})
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(int h, int w) const { return height == h && width == w; }
  template <typename U>
  bool same_shape(const Raster<U>& o) const {
    return height == o.height && width == o.width;
  }

  T& operator()(int y, int x, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& operator()(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  T& at(std::size_t pixel, int c = 0) { return data[pixel * channels + c]; }
  const T& at(std::size_t pixel, int c = 0) const { return data[pixel * channels + c]; }

  bool operator==(const Raster&) const = default;
};

using Image = Raster<double>;          // H x W x 3, values in [0,1]
using ScalarMap = Raster<double>;      // H x W x 1
using Mask = Raster<std::uint8_t>;     // H x W x 1, 0 or 1
using PointRaster = Raster<double>;    // H x W x 3

inline Vec3 point_at(const PointRaster& r, std::size_t p) {
  return {r.at(p, 0), r.at(p, 1), r.at(p, 2)};
}
inline void set_point(PointRaster& r, std::size_t p, const Vec3& v) {
  r.at(p, 0) = v.x();
  r.at(p, 1) = v.y();
  r.at(p, 2) = v.z();
}

std::size_t count_true(const Mask& m);

// Luma conversion used by the entropy sampler and the CLI.
ScalarMap to_grayscale(const Image& rgb);

}  // namespace gsg
