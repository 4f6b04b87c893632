#include "gsgtrack/entropy_sampler.hpp"
#include "gsgtrack/model_optimizer.hpp"
#include "gsgtrack/object_model.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>

using namespace gsg;
using namespace gsg::testing;

namespace {

// Histogram entropy of one block computed directly from its pixel list.
double oracle_entropy(const ScalarMap& g, int y0, int y1, int x0, int x1, int levels) {
  std::map<int, int> hist;
  int n = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      int q = static_cast<int>(g(y, x) * levels);
      if (q >= levels) q = levels - 1;
      ++hist[q];
      ++n;
    }
  double e = 0;
  for (auto [bin, c] : hist) e -= (double(c) / n) * std::log2(double(c) / n);
  return e;
}

// Block of coordinate v when [0, n) is cut at floor(i n / k).
int block_of(int v, int n, int k) {
  int i = 0;
  while ((i + 1) * n / k <= v) ++i;
  return i;
}

// A hemisphere-ish bump seen by a camera at the origin.
PointMap bump_pointmap(int h, int w, const Camera& cam, Mask& mask) {
  PointMap pm = make_pointmap(h, w);
  mask = Mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = (x - cam.cx) / cam.fx, v = (y - cam.cy) / cam.fy;
      const double r2 = u * u + v * v;
      if (r2 > 0.04) continue;
      const double z = 1.0 - std::sqrt(0.04 - r2);
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      set_point(pm.points, p, z * cam.ray(x, y));
      pm.confidence.at(p) = 1.0 + (x + y) % 5;
      pm.valid.at(p) = 1;
      mask.at(p) = 1;
    }
  return pm;
}

Image noise_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  Image img(h, w, 3);
  for (double& v : img.data) v = u(rng);
  return img;
}

}  // namespace

TEST(BlockEntropy, ConstantAndTwoValueBlocks) {
  ScalarMap g(8, 8, 1, 0.4);
  EXPECT_TRUE(block_entropy(g, 2, 256).isZero(0));
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 4; ++y) g(y, x) = (x % 2) ? 0.9 : 0.1;
  const Eigen::MatrixXd E = block_entropy(g, 2, 256);
  EXPECT_NEAR(E(0, 0), 1.0, 1e-15);
  EXPECT_EQ(E(1, 1), 0.0);
}

TEST(BlockEntropy, MatchesHistogramOracle) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 20 + trial, w = 33 - trial, k = 2 + trial % 5, levels = 2 + 31 * trial;
    ScalarMap g(h, w);
    for (double& v : g.data) v = std::floor(u(rng) * 40) / 40;
    const Eigen::MatrixXd E = block_entropy(g, k, levels);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        const double e =
            oracle_entropy(g, i * h / k, (i + 1) * h / k, j * w / k, (j + 1) * w / k, levels);
        EXPECT_NEAR(E(i, j), e, 1e-10);
        EXPECT_GE(E(i, j), 0.0);
        EXPECT_LE(E(i, j), std::log2(levels) + 1e-12);
      }
  }
}

TEST(BlockEntropy, GridLargerThanImageIsRejected) {
  try {
    block_entropy(ScalarMap(4, 8), 5, 256);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadGrid);
  }
}

TEST(SamplePointmap, InvariantsOnTexturedBump) {
  std::mt19937_64 rng(53);
  Camera cam = small_camera(48, 40, 60);
  Mask mask;
  const PointMap pm = bump_pointmap(40, 48, cam, mask);
  const Image img = noise_image(40, 48, rng);
  VoxelSampler vs;
  vs.grid_k = 8;
  vs.budget = 300;
  const SampleResult r = sample_pointmap(pm, img, mask, vs, 9);
  ASSERT_FALSE(r.samples.empty());

  // Quota oracle: recompute from block entropies of the active columns.
  const Eigen::MatrixXd E = block_entropy(to_grayscale(img), 8, 256);
  std::set<std::pair<int, int>> active;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p)
    if (mask.at(p)) active.insert({block_of(int(p / 48), 40, 8), block_of(int(p % 48), 48, 8)});
  double total = 0;
  for (auto [i, j] : active) total += E(i, j);
  int quota_sum = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const int expected = active.count({i, j}) ? int(std::ceil(300 * E(i, j) / total - 1e-9)) : 0;
      EXPECT_EQ(r.quota(i, j), expected);
      quota_sum += r.quota(i, j);
    }

  int originals = 0;
  for (const auto& s : r.samples) {
    EXPECT_GT(s.confidence, 0.0);
    EXPECT_TRUE(mask.at(s.pixel));
    originals += !s.interpolated;
  }
  EXPECT_LE(originals, quota_sum);
  EXPECT_LE(originals, vs.budget + 64);
  EXPECT_LE(static_cast<int>(r.samples.size()), (1 + vs.interpolants) * (vs.budget + 64));
}

TEST(SamplePointmap, PerVoxelCapHolds) {
  std::mt19937_64 rng(59);
  Camera cam = small_camera(64, 64, 60);
  Mask mask;
  const PointMap pm = bump_pointmap(64, 64, cam, mask);
  const Image img = noise_image(64, 64, rng);
  VoxelSampler vs;
  vs.grid_k = 4;
  vs.budget = 5000;
  const SampleResult r = sample_pointmap(pm, img, mask, vs, 3);
  // Rebuild the grid the sampler uses and count occupancy.
  Vec3 lo = Vec3::Constant(1e9), hi = -lo;
  for (std::size_t p = 0; p < mask.pixel_count(); ++p)
    if (mask.at(p)) {
      lo = lo.cwiseMin(point_at(pm.points, p));
      hi = hi.cwiseMax(point_at(pm.points, p));
    }
  const double side = (hi - lo).maxCoeff() * 1.05;
  const double z0 = 0.5 * (lo.z() + hi.z()) - 0.5 * side;
  EXPECT_NEAR(r.voxel_edge, side / 4, 1e-12);
  std::map<std::tuple<int, int, int>, int> occupancy;
  for (const auto& s : r.samples) {
    const int i = block_of(s.pixel / 64, 64, 4), j = block_of(s.pixel % 64, 64, 4);
    const int k = std::clamp(int(std::floor((s.point.z() - z0) / r.voxel_edge)), 0, 3);
    ++occupancy[{i, j, k}];
  }
  for (const auto& [voxel, n] : occupancy) EXPECT_LE(n, 2) << "K/2 cap";
}

TEST(SamplePointmap, UniformImageFallsBackToUniformQuota) {
  Camera cam = small_camera(32, 32, 40);
  Mask mask;
  const PointMap pm = bump_pointmap(32, 32, cam, mask);
  const Image img(32, 32, 3, 0.5);
  VoxelSampler vs;
  vs.grid_k = 4;
  vs.budget = 40;
  const SampleResult r = sample_pointmap(pm, img, mask, vs, 1);
  int active = 0;
  for (int i = 0; i < 16; ++i) active += r.quota(i) > 0;
  ASSERT_GT(active, 0);
  for (int i = 0; i < 16; ++i)
    if (r.quota(i) > 0) EXPECT_EQ(r.quota(i), int(std::ceil(40.0 / active)));
  int originals = 0;
  for (const auto& s : r.samples) originals += !s.interpolated;
  EXPECT_LE(originals, 40 + 16);
}

TEST(SamplePointmap, SinglePixel) {
  PointMap pm = make_pointmap(8, 8);
  Mask mask(8, 8);
  set_point(pm.points, 27, Vec3(0.01, -0.02, 0.9));
  pm.valid.at(27) = 1;
  pm.confidence.at(27) = 1.0;
  mask.at(27) = 1;
  VoxelSampler vs;
  vs.grid_k = 4;
  const SampleResult r = sample_pointmap(pm, Image(8, 8, 3, 0.2), mask, vs, 5);
  ASSERT_GE(r.samples.size(), 1u);
  EXPECT_LE(r.samples.size(), 1u + vs.interpolants);
  EXPECT_FALSE(r.samples[0].interpolated);
  EXPECT_EQ(r.samples[0].point, Vec3(0.01, -0.02, 0.9));
  for (std::size_t i = 1; i < r.samples.size(); ++i) {
    // Pushed away from the camera along the view ray.
    EXPECT_GT(r.samples[i].point.norm(), r.samples[0].point.norm());
  }
}

TEST(SamplePointmap, EmptyInput) {
  PointMap pm = make_pointmap(8, 8);
  Mask mask(8, 8, 1, 1);
  try {
    sample_pointmap(pm, Image(8, 8, 3), mask, VoxelSampler{4}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(SamplePointmap, HigherConfidenceIsPreferred) {
  // One column, many candidates in one voxel: the cap keeps K/2 of them and
  // confident points should dominate the picks.
  PointMap pm = make_pointmap(4, 4);
  Mask mask(4, 4, 1, 1);
  for (std::size_t p = 0; p < 16; ++p) {
    set_point(pm.points, p, Vec3(0.001 * (p % 4), 0.001 * (p / 4), 1.0 + 1e-4 * p));
    pm.valid.at(p) = 1;
    pm.confidence.at(p) = p % 2 ? 100.0 : 0.01;
  }
  VoxelSampler vs;
  vs.grid_k = 2;
  vs.budget = 4;
  vs.interpolants = 0;
  int confident = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (const auto& s : sample_pointmap(pm, Image(4, 4, 3, 0.5), mask, vs, seed).samples) {
      confident += s.confidence > 1;
      ++total;
    }
  }
  EXPECT_GT(double(confident) / total, 0.9);
}

TEST(Insert, NearestNeighbourScale) {
  ObjectModel model;
  std::vector<PointSample> s(2);
  s[0].point = Vec3(0, 0, 1);
  s[1].point = Vec3(0.03, 0.04, 1);
  insert(model, s, 3, 0.1);
  ASSERT_EQ(model.size(), 2u);
  for (const auto& g : model.gaussians) {
    EXPECT_NEAR(g.scale().x(), 0.025, 1e-15);
    EXPECT_NEAR(g.opacity(), 0.5, 1e-15);
  }
  EXPECT_EQ(model.insertion_epoch[1], 3);
  insert(model, s, 4, 0.01);  // clipped to the voxel edge
  EXPECT_EQ(model.size(), 4u);
  EXPECT_NEAR(model.gaussians[3].scale().x(), 0.01, 1e-15);
  std::vector<PointSample> twin(2);
  insert(model, twin, 5, 0.01);
  EXPECT_NEAR(model.gaussians[5].scale().x(), 1e-4, 1e-15);
}

TEST(PruneByMask, Behaviour) {
  Camera cam = small_camera(32, 32, 40);
  Mask mask(32, 32);
  for (int y = 10; y < 22; ++y)
    for (int x = 10; x < 22; ++x) mask(y, x) = 1;
  ObjectModel model;
  model.push_back(Gaussian::isotropic(Vec3(0, 0, 1), 0.01, Vec3::Ones(), 0.5), 0);
  model.push_back(Gaussian::isotropic(Vec3(0.02, -0.02, 1), 0.01, Vec3::Ones(), 0.5), 2);
  std::vector<MaskReference> refs{{Pose::identity(), mask, cam}};
  EXPECT_EQ(prune_by_mask(model, refs, 0), 0u);
  EXPECT_EQ(model.size(), 2u);

  model.push_back(Gaussian::isotropic(Vec3(0, 0, -1), 0.01, Vec3::Ones(), 0.5), 2);  // behind
  model.push_back(Gaussian::isotropic(Vec3(0.2, 0, 1), 0.01, Vec3::Ones(), 0.5), 2);  // outside
  model.push_back(Gaussian::isotropic(Vec3(0.2, 0, 1), 0.01, Vec3::Ones(), 0.5), 1);  // old
  EXPECT_EQ(prune_by_mask(model, refs, 2), 1u);
  EXPECT_EQ(model.size(), 4u);
  const auto snapshot = model.gaussians;
  EXPECT_EQ(prune_by_mask(model, refs, 2), 0u);
  EXPECT_EQ(model.gaussians.size(), snapshot.size());
}

TEST(PruneByMask, OutlierTwoRadiiAwayIsRemoved) {
  Camera cam = small_camera(48, 48, 80);
  const Pose view = Pose(Mat3::Identity(), Vec3(0, 0, 0.5));
  const double radius = 0.1;
  Mask mask(48, 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const Vec3 ray = cam.ray(x, y).normalized();
      // Pixel sees a sphere of the given radius at the origin.
      const double b = ray.dot(Vec3(0, 0, 0.5));
      mask(y, x) = b * b - (0.25 - radius * radius) >= 0;
    }
  ObjectModel model;
  model.push_back(Gaussian::isotropic(Vec3(0.02, 0.01, 0), 0.01, Vec3::Ones(), 0.5), 1);
  model.push_back(Gaussian::isotropic(Vec3(2 * radius, 0, 0), 0.01, Vec3::Ones(), 0.5), 1);
  prune_by_mask(model, {{view, mask, cam}}, 1);
  ASSERT_EQ(model.size(), 1u);
  EXPECT_NEAR(model.gaussians[0].center.x(), 0.02, 1e-15);
}

TEST(RotationDiverseSubset, PicksSpreadPoses) {
  std::vector<Pose> poses;
  for (int i = 0; i < 10; ++i) poses.push_back(exp_map({Vec3::Zero(), Vec3(0, 0.1 * i, 0)}));
  const auto picked = rotation_diverse_subset(poses, 3);
  ASSERT_EQ(picked.size(), 3u);
  EXPECT_EQ(picked[0], 9u);
  EXPECT_EQ(picked[1], 0u);
  EXPECT_TRUE(picked[2] == 4u || picked[2] == 5u);
  EXPECT_EQ(rotation_diverse_subset(poses, 20).size(), 10u);
}

namespace {

struct FitFixture {
  Camera cam = small_camera(24, 24, 60);
  Image target;
  Mask mask;
  std::vector<Gaussian> truth;
};

FitFixture make_fit_fixture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FitFixture f;
  f.truth = random_gaussians(rng, 15, 1.0, 0.1);
  const RenderOutput r = render(f.truth, Pose::identity(), f.cam);
  f.target = r.color;
  f.mask = binarize(r.alpha, 0.2);
  return f;
}

}  // namespace

TEST(OptimizeModel, ZeroIterationsAndZeroRatesAreIdentity) {
  FitFixture f = make_fit_fixture(61);
  ObjectModel model;
  std::mt19937_64 rng(1);
  for (auto g : f.truth) {
    g.color = Vec3(0.5, 0.5, 0.5);
    g.rotation *= 1.7;  // unnormalized on purpose
    model.push_back(g, 0);
  }
  const auto before = model.gaussians;
  const std::vector<TrainingView> views{{Pose::identity(), {f.cam, &f.target, &f.mask}}};
  optimize_model(model, views, 0, {});
  ModelOptimizerSettings zero;
  zero.lr_position = zero.lr_log_scale = zero.lr_rotation = zero.lr_color = zero.lr_opacity = 0;
  optimize_model(model, views, 60, zero);
  ASSERT_EQ(model.size(), before.size());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(model.gaussians[i].params(), before[i].params());
}

TEST(OptimizeModel, SingleGaussianLearnsConstantColor) {
  Camera cam = small_camera(16, 16, 40);
  ObjectModel model;
  model.push_back(Gaussian::isotropic(Vec3(0, 0, 1), 0.05, Vec3(0.2, 0.2, 0.2), 0.9), 0);
  const RenderOutput r = render(model.gaussians, Pose::identity(), cam);
  Mask mask = binarize(r.alpha, 0.5);
  // Target: what the same splat would look like in the goal colour.
  auto goal = model.gaussians;
  goal[0].color = Vec3(0.7, 0.4, 0.9);
  const Image target = render(goal, Pose::identity(), cam).color;
  ModelOptimizerSettings s;
  s.lr_position = s.lr_log_scale = s.lr_rotation = s.lr_opacity = 0;
  s.density_interval = 0;
  optimize_model(model, {{Pose::identity(), {cam, &target, &mask}}}, 125, s);
  EXPECT_LT((model.gaussians[0].color - goal[0].color).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(OptimizeModel, LossDoesNotIncrease) {
  for (std::uint64_t seed : {71, 72, 73}) {
    FitFixture f = make_fit_fixture(seed);
    std::mt19937_64 rng(seed);
    ObjectModel model;
    for (auto g : f.truth) {
      g.color = (g.color + random_vec3(rng, -0.3, 0.3)).cwiseMax(0).cwiseMin(1);
      g.center += random_vec3(rng, -0.005, 0.005);
      model.push_back(g, 0);
    }
    const ViewTarget view{f.cam, &f.target, &f.mask};
    const double before = evaluate_view(model.gaussians, Pose::identity(), view, {}, false).total;
    optimize_model(model, {{Pose::identity(), view}}, 125, {});
    const double after = evaluate_view(model.gaussians, Pose::identity(), view, {}, false).total;
    EXPECT_LE(after, before) << seed;
    EXPECT_LT(after, 0.5 * before) << seed;
  }
}
