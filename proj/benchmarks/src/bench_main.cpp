#include "gsgtrack/distance_transform.hpp"
#include "gsgtrack/metrics.hpp"
#include "gsgtrack/pipeline.hpp"
#include "gsgtrack/pose_tracker.hpp"
#include "gsgtrack/splat_renderer.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace gsg;

namespace {

std::vector<Gaussian> cloud(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1), s(-1, 1);
  std::vector<Gaussian> gs(n);
  for (auto& g : gs) {
    g.center = Vec3(0.1 * s(rng), 0.1 * s(rng), 0.5 + 0.05 * s(rng));
    g.log_scale = Vec3::Constant(std::log(0.004 + 0.004 * u(rng)));
    g.rotation = Vec4(s(rng), s(rng), s(rng), s(rng)).normalized();
    g.color = Vec3(u(rng), u(rng), u(rng));
    g.opacity_logit = 1.0;
  }
  return gs;
}

Camera camera(int size) {
  Camera c;
  c.fx = c.fy = 1.6 * size;
  c.cx = c.cy = 0.5 * (size - 1);
  c.width = c.height = size;
  return c;
}

RenderSettings single_thread() {
  RenderSettings s;
  s.threads = 1;
  return s;
}

void BM_RenderForward(benchmark::State& st) {
  const auto gs = cloud(static_cast<int>(st.range(0)), 1);
  const Camera cam = camera(static_cast<int>(st.range(1)));
  for (auto _ : st) benchmark::DoNotOptimize(render(gs, Pose(), cam, nullptr, single_thread()));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_RenderForward)->Args({1000, 64})->Args({8000, 64})->Args({8000, 128});

void BM_RenderBackward(benchmark::State& st) {
  const auto gs = cloud(static_cast<int>(st.range(0)), 2);
  const Camera cam = camera(64);
  RenderCache cache;
  const RenderOutput out = render(gs, Pose(), cam, &cache, single_thread());
  Image gc = out.color;
  for (double& v : gc.data) v = 1e-3;
  ScalarMap gd = out.depth, ga = out.alpha;
  for (double& v : gd.data) v = 1e-3;
  for (double& v : ga.data) v = 1e-3;
  for (auto _ : st) benchmark::DoNotOptimize(render_backward(gs, cache, gc, gd, ga));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_RenderBackward)->Arg(1000)->Arg(8000);

void BM_DistanceTransform(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  Mask m(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) m(y, x) = (x - n / 2) * (x - n / 2) + (y - n / 3) * (y - n / 3) < n * n / 9;
  for (auto _ : st) benchmark::DoNotOptimize(euclidean_dt(m));
}
BENCHMARK(BM_DistanceTransform)->Arg(64)->Arg(256);

void BM_Chamfer(benchmark::State& st) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<Vec3> a(st.range(0)), b(st.range(0));
  for (auto& p : a) p = Vec3(g(rng), g(rng), g(rng)).normalized() * 0.1;
  for (auto& p : b) p = Vec3(g(rng), g(rng), g(rng)).normalized() * 0.1;
  for (auto _ : st) benchmark::DoNotOptimize(chamfer(a, b, 0.0));
}
BENCHMARK(BM_Chamfer)->Arg(2000)->Arg(20000);

// One tracking solve on a synthetic scene, from the previous frame's pose.
void BM_TrackFrame(benchmark::State& st) {
  SceneSpec spec;
  spec.family = "box";
  spec.frames = 2;
  const SyntheticScene scene = generate_scene(spec);
  ObjectModel model;
  const auto pts = scene.surface_points(3000, 1);
  for (const Vec3& p : pts) {
    Gaussian g;
    g.center = p;
    g.log_scale = Vec3::Constant(std::log(0.004));
    g.color = scene.color_at(p);
    g.opacity_logit = 2.0;
    model.push_back(g, 0);
  }
  const ViewRender v = scene.render_frame(1);
  TrackState state{scene.trajectory[0], true, 0};
  TrackSettings ts;
  ts.render.threads = 1;
  for (auto _ : st) benchmark::DoNotOptimize(track_frame(state, model, scene.camera, v.image, v.mask, ts));
}
BENCHMARK(BM_TrackFrame)->Unit(benchmark::kMillisecond);

void BM_PipelineShortOrbit(benchmark::State& st) {
  SceneSpec spec;
  spec.family = "sphere";
  spec.frames = 4;
  const SyntheticScene scene = generate_scene(spec);
  const SequenceInput in = synthetic_sequence(scene);
  PipelineConfig cfg;
  cfg.threads = 1;
  cfg.init_iters = 60;
  cfg.joint_iters = 20;
  cfg.geo_iters = 60;
  cfg.track_iters = 30;
  cfg.budget = 2000;
  cfg.keyframe_budget = 300;
  for (auto _ : st) {
    OraclePairSource pairs(scene, {}, 1);
    benchmark::DoNotOptimize(run_pipeline(in, cfg, pairs));
  }
}
BENCHMARK(BM_PipelineShortOrbit)->Unit(benchmark::kMillisecond)->Iterations(2);

}  // namespace

BENCHMARK_MAIN();
