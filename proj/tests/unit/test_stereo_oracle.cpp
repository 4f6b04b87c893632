#include "gsgtrack/io.hpp"
#include "gsgtrack/stereo_oracle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace gsg;
namespace fs = std::filesystem;

namespace {

SyntheticScene test_scene(const char* family = "box", int frames = 6) {
  SceneSpec spec;
  spec.family = family;
  spec.frames = frames;
  spec.seed = 11;
  return generate_scene(spec);
}

// Ground-truth edge-frame points rebuilt from the renderer's object-frame hits.
std::vector<Vec3> true_edge_points(const SyntheticScene& scene, const MatchedPair& pair, int frame_u,
                                   int frame, double scale) {
  const auto view = scene.render_frame(frame);
  const Pose to_edge = pair.edge_to_camera_u.inverse();
  const Pose& Tu = scene.trajectory[frame_u];
  std::vector<Vec3> out(view.mask.pixel_count(), Vec3::Constant(NAN));
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (!view.mask.at(p)) continue;
    out[p] = to_edge * (scale * (Tu * point_at(view.object_points, p)));
  }
  return out;
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * (i + j);
    i = j + 1;
  }
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Raster equality that treats NaN as equal to NaN.
bool same_values(const Raster<double>& a, const Raster<double>& b) {
  return a.same_shape(b) && std::equal(a.data.begin(), a.data.end(), b.data.begin(), [](double x, double y) {
           return x == y || (std::isnan(x) && std::isnan(y));
         });
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gsgtrack_test_oracle" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(StereoOracle, NoiselessPairIsExactInTheEdgeFrame) {
  const auto scene = test_scene();
  for (double scale : {1.0, 2.5}) {
    NoiseProfile noise;
    noise.global_scale = scale;
    const auto pair = match_pair(scene, 1, 3, noise, 5);
    EXPECT_TRUE(pair.relative.is_valid());
    for (auto [pm, frame] : {std::pair{&pair.u, 1}, std::pair{&pair.v, 3}}) {
      const auto truth = true_edge_points(scene, pair, 1, frame, scale);
      std::size_t n = 0;
      for (std::size_t p = 0; p < truth.size(); ++p) {
        if (!std::isfinite(truth[p].x())) {
          EXPECT_FALSE(pm->valid.at(p));
          EXPECT_EQ(pm->confidence.at(p), 0.0);
          continue;
        }
        ASSERT_TRUE(pm->valid.at(p));
        EXPECT_LT((point_at(pm->points, p) - truth[p]).norm(), 1e-9);
        EXPECT_DOUBLE_EQ(pm->confidence.at(p), 7.0);
        ++n;
      }
      EXPECT_GT(n, 100u);
    }
  }
}

TEST(StereoOracle, EdgeOffsetIsARigidChangeOfFrame) {
  const auto scene = test_scene();
  NoiseProfile with, without;
  without.edge_offset = false;
  const auto a = match_pair(scene, 0, 2, with, 9);
  const auto b = match_pair(scene, 0, 2, without, 9);
  EXPECT_FALSE(a.edge_to_camera_u.matrix().isApprox(Mat4::Identity()));
  EXPECT_TRUE(b.edge_to_camera_u.matrix().isApprox(Mat4::Identity()));
  for (std::size_t p = 0; p < a.u.valid.pixel_count(); ++p) {
    if (!a.u.valid.at(p)) continue;
    EXPECT_LT((a.edge_to_camera_u * point_at(a.u.points, p) - point_at(b.u.points, p)).norm(), 1e-9);
  }
}

TEST(StereoOracle, OutlierFractionMatchesRate) {
  const auto scene = test_scene("sphere");
  NoiseProfile noise;
  noise.outlier_rate = 0.2;
  std::size_t masked = 0, outliers = 0;
  for (int s = 0; s < 4; ++s) {
    const auto pair = match_pair(scene, 0, 1, noise, 100 + s);
    for (const Mask* m : {&pair.outliers_u, &pair.outliers_v}) outliers += count_true(*m);
    masked += count_true(pair.u.valid) + count_true(pair.v.valid);
  }
  const double f = static_cast<double>(outliers) / masked;
  const double sd = std::sqrt(0.2 * 0.8 / masked);
  EXPECT_NEAR(f, 0.2, 5 * sd);
}

TEST(StereoOracle, ConfidenceRanksWithError) {
  const auto scene = test_scene("superquadric");
  NoiseProfile noise;
  noise.depth_sigma = 0.002;
  noise.outlier_rate = 0.1;
  const auto pair = match_pair(scene, 2, 4, noise, 3);
  const auto truth = true_edge_points(scene, pair, 2, 2, 1.0);
  std::vector<double> conf, neg_err;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (!pair.u.valid.at(p)) continue;
    conf.push_back(pair.u.confidence.at(p));
    neg_err.push_back(-(point_at(pair.u.points, p) - truth[p]).norm());
  }
  ASSERT_GT(conf.size(), 100u);
  EXPECT_GT(spearman(conf, neg_err), 0.9);

  // Without fidelity, confidence carries no information.
  noise.confidence_fidelity = 0;
  const auto flat = match_pair(scene, 2, 4, noise, 3);
  for (std::size_t p = 0; p < flat.u.valid.pixel_count(); ++p)
    if (flat.u.valid.at(p)) EXPECT_DOUBLE_EQ(flat.u.confidence.at(p), 5.0);
}

TEST(StereoOracle, IsDeterministicInSeed) {
  const auto scene = test_scene();
  NoiseProfile noise;
  noise.depth_sigma = 0.001;
  noise.outlier_rate = 0.05;
  const auto a = match_pair(scene, 0, 1, noise, 42), b = match_pair(scene, 0, 1, noise, 42);
  EXPECT_TRUE(same_values(a.u.points, b.u.points));
  EXPECT_EQ(a.v.confidence, b.v.confidence);
}

TEST(StereoOracle, FailuresCorruptTheExpectedQuantity) {
  const auto scene = test_scene();
  const auto clean = match_pair(scene, 0, 2, {}, 1);
  const Vec3 pivot = clean.edge_to_camera_u.inverse() * scene.trajectory[0].translation();

  auto flipped = clean;
  corrupt_pair(flipped, PairFailure::Flip, M_PI / 2, pivot);
  EXPECT_EQ(flipped.failure, PairFailure::Flip);
  EXPECT_TRUE(same_values(flipped.u.points, clean.u.points));
  double moved = 0;
  for (std::size_t p = 0; p < clean.v.valid.pixel_count(); ++p)
    if (clean.v.valid.at(p))
      moved = std::max(moved, (point_at(flipped.v.points, p) - point_at(clean.v.points, p)).norm());
  EXPECT_GT(moved, 0.05);

  auto pushed = clean;
  corrupt_pair(pushed, PairFailure::DepthPush, 0.03, pivot);
  const Pose to_cam = clean.edge_to_camera_u;
  for (std::size_t p = 0; p < clean.u.valid.pixel_count(); ++p) {
    if (!clean.u.valid.at(p)) continue;
    const Vec3 a = to_cam * point_at(clean.u.points, p), b = to_cam * point_at(pushed.u.points, p);
    EXPECT_NEAR((b - a).norm(), 0.03, 1e-9);
    EXPECT_LT(a.normalized().cross(b.normalized()).norm(), 1e-9);  // same ray
  }

  auto weak = clean;
  corrupt_pair(weak, PairFailure::LowConfidence, 1.0, pivot);
  double sum = 0;
  for (std::size_t p = 0; p < weak.u.valid.pixel_count(); ++p)
    if (weak.u.valid.at(p)) sum += weak.u.confidence.at(p);
  EXPECT_NEAR(sum / count_true(weak.u.valid), 1.0, 1e-9);
}

TEST(StereoOracle, PairFailureRateIsHonoured) {
  const auto scene = test_scene();
  NoiseProfile noise;
  noise.pair_failure_rate = 0.3;
  int failed = 0;
  const int n = 200;
  for (int s = 0; s < n; ++s)
    failed += match_pair(scene, 0, 1, noise, 1000 + s).failure != PairFailure::None;
  EXPECT_NEAR(failed / double(n), 0.3, 5 * std::sqrt(0.3 * 0.7 / n));
}

TEST(StereoOracle, ErrorsOnInvisibleFramesAndBadProfiles) {
  const auto scene = test_scene();
  Pose away(Mat3::Identity(), Vec3(0, 0, -1));
  try {
    match_views(scene, away, scene.camera, scene.trajectory[0], scene.camera, {}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoOverlap);
  }
  NoiseProfile bad;
  bad.outlier_rate = 1.0;
  EXPECT_THROW(match_pair(scene, 0, 1, bad, 0), Error);
}

TEST(PointmapIo, RoundTripPreservesFloatValues) {
  const auto scene = test_scene();
  NoiseProfile noise;
  noise.depth_sigma = 0.001;
  std::vector<StoredEdge> edges;
  for (auto [u, v] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{3, 1}}) {
    const auto pair = match_pair(scene, u, v, noise, u * 10 + v);
    edges.push_back({u, v, pair.u, pair.v});
  }
  const fs::path dir = scratch_dir("roundtrip");
  save_pointmaps(dir, edges);
  EXPECT_TRUE(fs::exists(dir / "edge_3_1_conf_v.gsgr"));
  const auto back = load_pointmaps(dir);
  ASSERT_EQ(back.size(), 3u);
  for (const auto& e : back) {
    const auto it = std::find_if(edges.begin(), edges.end(),
                                 [&](const StoredEdge& o) { return o.u == e.u && o.v == e.v; });
    ASSERT_NE(it, edges.end());
    EXPECT_EQ(e.pm_u.valid, it->pm_u.valid);
    for (std::size_t p = 0; p < e.pm_u.valid.pixel_count(); ++p) {
      if (!e.pm_u.valid.at(p)) continue;
      for (int c = 0; c < 3; ++c)
        EXPECT_EQ(e.pm_u.points.at(p, c), static_cast<double>(static_cast<float>(it->pm_u.points.at(p, c))));
      EXPECT_NEAR(e.pm_v.confidence.at(p), it->pm_v.confidence.at(p), 1e-6);
    }
  }
}

TEST(PointmapIo, TruncatedFileReportsOffset) {
  const auto scene = test_scene();
  const auto pair = match_pair(scene, 0, 1, {}, 0);
  const fs::path dir = scratch_dir("truncated");
  save_pointmaps(dir, {{0, 1, pair.u, pair.v}});
  const fs::path f = dir / "edge_0_1_pts_v.gsgr";
  fs::resize_file(f, fs::file_size(f) - 10);
  try {
    load_pointmaps(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(PointmapIo, MixedResolutionIsRejected) {
  const auto scene = test_scene();
  const auto pair = match_pair(scene, 0, 1, {}, 0);
  const fs::path dir = scratch_dir("mixed");
  save_pointmaps(dir, {{0, 1, pair.u, pair.v}});
  write_raster(dir / "edge_0_1_conf_v.gsgr", ScalarMap(pair.v.height() / 2, pair.v.width()));
  try {
    load_pointmaps(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
  }
  fs::remove(dir / "edge_0_1_conf_v.gsgr");
  EXPECT_THROW(load_pointmaps(dir), Error);  // incomplete edge
}
