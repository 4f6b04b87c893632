#include "gsgtrack/io.hpp"
#include "gsgtrack/kdtree.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace gsg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gsgtrack_test_io";
  fs::create_directories(dir);
  return dir / name;
}

ErrorCode decode_error(const std::vector<unsigned char>& bytes, std::string* msg = nullptr) {
  try {
    decode_raster(bytes);
  } catch (const Error& e) {
    if (msg) *msg = e.what();
    return e.code();
  }
  return ErrorCode::IoError;
}

}  // namespace

TEST(RasterIo, RoundTripIsExactForFloatValues) {
  Raster<double> r(5, 7, 3);
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = static_cast<float>(0.1 * i - 3.7);
  const fs::path p = scratch("r.gsgr");
  write_raster(p, r);
  EXPECT_EQ(fs::file_size(p), 16u + 5 * 7 * 3 * 4);
  EXPECT_EQ(read_raster(p), r);
}

TEST(RasterIo, HeaderLayout) {
  const auto bytes = encode_raster(Raster<double>(2, 3, 1, 1.0));
  ASSERT_EQ(bytes.size(), 16u + 24);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GSGR");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[8], 3);
  EXPECT_EQ(bytes[12], 1);
  // 1.0f little endian
  EXPECT_EQ(bytes[16 + 3], 0x3f);
  EXPECT_EQ(bytes[16 + 2], 0x80);
}

TEST(RasterIo, MalformedInputsReportOffsets) {
  auto bytes = encode_raster(Raster<double>(4, 4, 1, 0.5));
  std::string msg;
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_EQ(decode_error(truncated, &msg), ErrorCode::FormatError);
  EXPECT_NE(msg.find("offset " + std::to_string(truncated.size())), std::string::npos) << msg;

  auto bad_magic = bytes;
  bad_magic[1] = 'X';
  EXPECT_EQ(decode_error(bad_magic, &msg), ErrorCode::FormatError);
  EXPECT_NE(msg.find("offset 0"), std::string::npos);

  auto header_only = bytes;
  header_only.resize(10);
  EXPECT_EQ(decode_error(header_only), ErrorCode::FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_EQ(decode_error(trailing, &msg), ErrorCode::FormatError);
  EXPECT_NE(msg.find("offset " + std::to_string(bytes.size())), std::string::npos);
}

TEST(PngIo, ColorAndMaskRoundTrip) {
  Image img(6, 9, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = (i * 37 % 256) / 255.0;
  const fs::path p = scratch("c.png");
  write_png(p, img);
  const Image back = read_png(p);
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-12);

  Mask m(6, 9);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = (i % 3) == 0;
  write_mask_png(scratch("m.png"), m);
  EXPECT_EQ(read_mask_png(scratch("m.png")), m);
}

TEST(PlyIo, RoundTripAtFloatPrecision) {
  std::mt19937_64 rng(3);
  const auto gs = gsg::testing::random_gaussians(rng, 12);
  const fs::path p = scratch("m.ply");
  write_ply(p, gs);
  const auto back = read_ply(p);
  ASSERT_EQ(back.size(), gs.size());
  for (std::size_t i = 0; i < gs.size(); ++i) {
    EXPECT_LT((back[i].params() - gs[i].params()).cwiseAbs().maxCoeff(), 1e-6);
  }
  std::ifstream in(p, std::ios::binary);
  std::string first;
  std::getline(in, first);
  EXPECT_EQ(first, "ply");
}

TEST(KdTree, MatchesBruteForce) {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 700; ++i) pts.push_back(gsg::testing::random_vec3(rng, -1, 1));
  const KdTree tree(pts);
  for (int q = 0; q < 300; ++q) {
    const Vec3 x = gsg::testing::random_vec3(rng, -1.2, 1.2);
    double best = 1e300;
    for (const auto& p : pts) best = std::min(best, (p - x).squaredNorm());
    EXPECT_EQ(tree.nearest(x).sq_dist, best);
  }
  for (int i = 0; i < 50; ++i) {
    double best = 1e300;
    for (int j = 0; j < 700; ++j)
      if (j != i) best = std::min(best, (pts[j] - pts[i]).squaredNorm());
    EXPECT_EQ(tree.nearest(pts[i], i).sq_dist, best);
  }
}
