#include "gsgtrack/losses.hpp"
#include "gsgtrack/pose_tracker.hpp"
#include "gsgtrack/scene.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace gsg;
using namespace gsg::testing;

namespace {

// Gaussians on the surface of a textured synthetic object, and a target
// rendered from them so that the true pose is an exact minimum.
struct TrackFixture {
  SyntheticScene scene;
  ObjectModel model;
  Pose truth;
  Image image;
  Mask mask;
};

TrackFixture make_fixture(const char* family, std::uint64_t seed, int frame = 0) {
  SceneSpec spec;
  spec.family = family;
  spec.seed = seed;
  TrackFixture f{generate_scene(spec), {}, {}, {}, {}};
  for (const auto& p : f.scene.surface_points(1500, seed)) {
    f.model.push_back(Gaussian::isotropic(p, 0.006, f.scene.color_at(p), 0.9), 0);
  }
  f.truth = f.scene.trajectory[frame];
  const auto out = render(f.model.gaussians, f.truth, f.scene.camera);
  f.image = out.color;
  f.mask = binarize(out.alpha);
  return f;
}

Pose perturb(const Pose& truth, std::mt19937_64& rng, double deg, double frac) {
  const Vec3 axis = random_vec3(rng, -1, 1).normalized(), dir = random_vec3(rng, -1, 1).normalized();
  return Pose(so3_exp(deg * M_PI / 180 * axis) * truth.rotation(),
              truth.translation() + frac * truth.translation().norm() * dir);
}

}  // namespace

TEST(TrackFrame, TruePoseIsAFixedPoint) {
  const auto f = make_fixture("box", 2);
  const TrackState s{f.truth, true, 0};
  const auto r = track_frame(s, f.model, f.scene.camera, f.image, f.mask);
  EXPECT_LT(geodesic_rotation_distance(r.state.pose, f.truth), 1e-4);
  EXPECT_LT((r.state.pose.translation() - f.truth.translation()).norm(), 1e-4);
  EXPECT_TRUE(r.state.valid);
  EXPECT_LE(r.final_loss, r.initial_loss);
}

TEST(TrackFrame, RecoversSmallPerturbations) {
  std::mt19937_64 rng(3);
  for (const char* family : {"box", "superquadric", "blob"}) {
    const auto f = make_fixture(family, 4);
    const TrackState s{perturb(f.truth, rng, 2.0, 0.02), true, 0};
    const auto r = track_frame(s, f.model, f.scene.camera, f.image, f.mask);
    EXPECT_LT(geodesic_rotation_distance(r.state.pose, f.truth), 0.2 * M_PI / 180) << family;
    EXPECT_LT((r.state.pose.translation() - f.truth.translation()).norm(),
              0.002 * f.truth.translation().norm())
        << family;
    EXPECT_LT(r.final_loss, r.initial_loss);
    EXPECT_TRUE(r.state.valid);
  }
}

TEST(TrackFrame, PreconditionsAndRelocalization) {
  const auto f = make_fixture("sphere", 5);
  const TrackState lost{Pose(), false, 0};
  try {
    track_frame(lost, f.model, f.scene.camera, f.image, f.mask);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PreconditionFailed);
  }
  const auto r = track_frame(lost, f.model, f.scene.camera, f.image, f.mask, {},
                             [&] { return std::optional<Pose>(f.truth); });
  EXPECT_TRUE(r.state.valid);
  EXPECT_THROW(track_frame({f.truth, true, 0}, f.model, f.scene.camera, f.image, Mask(64, 64)), Error);
  EXPECT_THROW(track_frame({f.truth, true, 0}, ObjectModel{}, f.scene.camera, f.image, f.mask), Error);
}

TEST(TrackFrame, DivergenceMarksTheStateInvalid) {
  const auto f = make_fixture("box", 6);
  Image wrong = f.image;
  for (auto& v : wrong.data) v = 1.0 - v > 0.5 ? 1.0 : 0.0;  // nothing like the model
  for (std::size_t p = 0; p < wrong.pixel_count(); ++p)
    for (int c = 0; c < 3; ++c) wrong.at(p, c) = f.image.at(p, c) < 0.5 ? 1.0 : 0.0;
  TrackSettings s;
  s.divergence_bound = 0.2;
  const auto r = track_frame({f.truth, true, 0}, f.model, f.scene.camera, wrong, f.mask, s);
  EXPECT_TRUE(r.lost);
  EXPECT_FALSE(r.state.valid);
}

TEST(TrackFrame, RecoversAnInPlaceTurnOfOneOrbitStep) {
  // A turn about the object itself is a narrow valley for steps that rotate
  // about the camera; each frame of an orbit looks like this.
  std::mt19937_64 rng(8);
  for (const char* family : {"sphere", "box"}) {
    const auto f = make_fixture(family, 9);
    const Vec3 c = f.truth.translation();
    const Mat3 dR = so3_exp(6 * M_PI / 180 * random_vec3(rng, -1, 1).normalized());
    const Pose start(dR * f.truth.rotation(), dR * (f.truth.translation() - c) + c);
    const auto r = track_frame({start, true, 0}, f.model, f.scene.camera, f.image, f.mask);
    EXPECT_LT(geodesic_rotation_distance(r.state.pose, f.truth), 0.2 * M_PI / 180) << family;
    EXPECT_LT((r.state.pose.translation() - f.truth.translation()).norm(),
              0.002 * f.truth.translation().norm())
        << family;
  }
}
