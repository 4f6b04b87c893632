#pragma once

#include "gsgtrack/gaussian.hpp"

#include <filesystem>
#include <vector>

namespace gsg {

// GSGR float raster: "GSGR", u32 height, u32 width, u32 channels, then
// float32 little-endian row-major data. Malformed input throws FormatError
// naming the byte offset where parsing failed.
void write_raster(const std::filesystem::path& path, const Raster<double>& r);
Raster<double> read_raster(const std::filesystem::path& path);
std::vector<unsigned char> encode_raster(const Raster<double>& r);
Raster<double> decode_raster(const std::vector<unsigned char>& bytes);

// 8-bit PNG. Colour images are RGB in [0,1]; masks are thresholded at 128.
void write_png(const std::filesystem::path& path, const Image& rgb);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Image read_png(const std::filesystem::path& path);
Mask read_mask_png(const std::filesystem::path& path);

// Binary little-endian PLY with x y z scale_0..2 rot_0..3 opacity red green
// blue as float32 (log-scales, wxyz quaternion, pre-sigmoid opacity).
void write_ply(const std::filesystem::path& path, const std::vector<Gaussian>& gaussians);
std::vector<Gaussian> read_ply(const std::filesystem::path& path);

}  // namespace gsg
