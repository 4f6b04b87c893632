#include "gsgtrack/common.hpp"
#include "gsgtrack/pointmap.hpp"

#include <limits>

namespace gsg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleNearPi: return "AngleNearPi";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::MissingForwardCache: return "MissingForwardCache";
    case ErrorCode::BadGrid: return "BadGrid";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TrackLost: return "TrackLost";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::ZeroMask: return "ZeroMask";
    case ErrorCode::DegenerateCorrespondences: return "DegenerateCorrespondences";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::BadSpec: return "BadSpec";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateExtent: return "DegenerateExtent";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::size_t count_true(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

ScalarMap to_grayscale(const Image& rgb) {
  ScalarMap g(rgb.height, rgb.width, 1);
  for (std::size_t p = 0; p < rgb.pixel_count(); ++p) {
    g.at(p) = 0.299 * rgb.at(p, 0) + 0.587 * rgb.at(p, 1) + 0.114 * rgb.at(p, 2);
  }
  return g;
}

PointMap make_pointmap(int height, int width) {
  return {PointRaster(height, width, 3, std::numeric_limits<double>::quiet_NaN()),
          ScalarMap(height, width), Mask(height, width)};
}

}  // namespace gsg
