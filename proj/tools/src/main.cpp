#include "dataset.hpp"

#include "gsgtrack/io.hpp"
#include "gsgtrack/pipeline.hpp"
#include "gsgtrack/stereo_oracle.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <map>
#include <memory>

namespace fs = std::filesystem;
using namespace gsg;
using nlohmann::json;

namespace {

// Config file plus one flag per PipelineConfig member (underscores become
// dashes). Flags override the file.
struct ConfigOptions {
  std::string file;
  bool single_thread = false;
  std::map<std::string, std::string> values;

  void attach(CLI::App& app) {
    app.add_option("--config", file, "JSON config file")->check(CLI::ExistingFile);
    app.add_flag("--single-thread", single_thread, "Force one thread (byte-identical reruns)");
    const json defaults = json::parse(config_json(PipelineConfig{}));
    for (const ConfigField& f : config_fields()) {
      std::string flag = "--" + f.name;
      for (char& ch : flag) if (ch == '_') ch = '-';
      app.add_option(flag, values[f.name], f.help)
          ->default_str(defaults.at(f.name).dump())
          ->group("Config");
    }
  }

  PipelineConfig build() const {
    PipelineConfig cfg;
    if (!file.empty()) cfg = parse_config(tools::read_text(file));
    json over = json::object();
    for (const ConfigField& f : config_fields()) {
      const std::string& v = values.at(f.name);
      if (v.empty()) continue;
      try {
        switch (f.kind) {
          case ConfigField::Int: over[f.name] = std::stoll(v); break;
          case ConfigField::Double: over[f.name] = std::stod(v); break;
          case ConfigField::Seed: over[f.name] = std::stoull(v); break;
          case ConfigField::String: over[f.name] = v; break;
          case ConfigField::Bool:
            if (v == "true" || v == "1") over[f.name] = true;
            else if (v == "false" || v == "0") over[f.name] = false;
            else throw std::invalid_argument(v);
            break;
        }
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::ConfigError, "--" + f.name + ": cannot read '" + v + "'");
      }
    }
    cfg = parse_config(over.dump(), cfg);
    if (single_thread) cfg.threads = 1;
    return cfg;
  }
};

struct NoiseOptions {
  double depth_sigma_fraction = 0;  // of the object diameter
  double outlier_rate = 0;
  double outlier_fraction = 0.1;    // outlier displacement, of the diameter
  double confidence_fidelity = 1;
  double pair_failure_rate = 0;
  double global_scale = 1;
  std::uint64_t seed = 7;

  void attach(CLI::App& app) {
    auto g = "Oracle noise";
    app.add_option("--depth-sigma", depth_sigma_fraction, "Depth noise, fraction of the diameter")
        ->group(g)->capture_default_str();
    app.add_option("--outlier-rate", outlier_rate, "Gross outlier rate")->group(g)->capture_default_str();
    app.add_option("--outlier-scale", outlier_fraction, "Outlier displacement, fraction of the diameter")
        ->group(g)->capture_default_str();
    app.add_option("--confidence-fidelity", confidence_fidelity, "1: confidence tracks error")
        ->group(g)->capture_default_str();
    app.add_option("--pair-failure-rate", pair_failure_rate, "Whole-pair failure rate")
        ->group(g)->capture_default_str();
    app.add_option("--global-scale", global_scale, "Scale of emitted points")->group(g)->capture_default_str();
    app.add_option("--noise-seed", seed, "Oracle seed")->group(g)->capture_default_str();
  }

  NoiseProfile build(double diameter) const {
    NoiseProfile n;
    n.depth_sigma = depth_sigma_fraction * diameter;
    n.outlier_rate = outlier_rate;
    n.outlier_scale = outlier_fraction * diameter;
    n.confidence_fidelity = confidence_fidelity;
    n.pair_failure_rate = pair_failure_rate;
    n.global_scale = global_scale;
    n.validate();
    return n;
  }
};

void print_frame(const FrameLog& l) {
  std::fprintf(stderr, "frame %d%s%s edges %d rejected %d/%d/%d gaussians %zu\n", l.frame,
               l.keyframe ? " keyframe" : "", l.lost ? " lost" : "", l.edges, l.rejected_pose,
               l.rejected_geometry, l.rejected_confidence, l.gaussians);
}

// Every pair u <= v, including frame 0 with itself, through the original camera.
void write_pairs(const fs::path& dir, const SyntheticScene& scene, OraclePairSource& oracle) {
  std::vector<StoredEdge> edges;
  const int n = static_cast<int>(scene.trajectory.size());
  for (int u = 0; u < n; ++u)
    for (int v = u; v < n; ++v) {
      if (u == v && u != 0) continue;
      GraphNode a, b;
      a.frame_idx = u;
      b.frame_idx = v;
      a.cam = b.cam = scene.camera;
      if (auto m = oracle.match(a, b)) edges.push_back({u, v, std::move(m->u), std::move(m->v)});
    }
  save_pointmaps(dir, edges);
}

void finish(const fs::path& out, const PipelineResult& r) {
  save_outputs(out, r);
  std::printf("%s\n", report_json(r.report).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Model-free 6DoF object pose tracking with Gaussian splats"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene and track it");
  std::string scene_file, out_dir = "out", input_dir;
  SceneSpec spec;
  bool quiet = false;
  ConfigOptions synth_cfg;
  NoiseOptions synth_noise;
  synth->add_option("--scene", scene_file, "Scene spec JSON")->check(CLI::ExistingFile);
  synth->add_option("--family", spec.family, "sphere | box | superquadric | blob")->capture_default_str();
  synth->add_option("--trajectory", spec.trajectory, "orbit | jitter")->capture_default_str();
  synth->add_option("--frames", spec.frames, "Sequence length")->capture_default_str();
  synth->add_option("--scene-seed", spec.seed, "Scene seed")->capture_default_str();
  synth->add_flag("--low-texture", spec.low_texture, "Near-uniform object texture");
  synth->add_option("--out", out_dir, "Output directory")->capture_default_str();
  synth->add_option("--write-input", input_dir, "Also write the sequence in the `run` layout here");
  synth->add_flag("-q,--quiet", quiet, "No per-frame progress");
  synth_cfg.attach(*synth);
  synth_noise.attach(*synth);

  // run
  auto* run = app.add_subcommand("run", "Track a sequence directory");
  std::string seq_dir, pairs_dir, run_out = "out";
  bool oracle_mode = false;
  ConfigOptions run_cfg;
  NoiseOptions run_noise;
  run->add_option("input", seq_dir, "Sequence directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--pairs", pairs_dir, "GSGR pointmap directory (default: <input>/pairs)");
  run->add_flag("--oracle", oracle_mode, "Match pairs with the oracle of <input>/scene.json");
  run->add_option("--out", run_out, "Output directory")->capture_default_str();
  run->add_flag("-q,--quiet", quiet, "No per-frame progress");
  run_cfg.attach(*run);
  run_noise.attach(*run);

  // eval
  auto* eval = app.add_subcommand("eval", "Metrics of a trajectory against ground truth");
  std::string traj_file, gt_file, model_file, metrics_out;
  eval->add_option("trajectory", traj_file, "Trajectory JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("ground_truth", gt_file, "Ground truth JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--model", model_file, "PLY model for the Chamfer distance")->check(CLI::ExistingFile);
  eval->add_option("--out", metrics_out, "Write the metrics JSON here instead of stdout");

  // export
  auto* exp = app.add_subcommand("export", "Convert a run's trajectory and model");
  std::string exp_in, exp_out, format = "both";
  exp->add_option("run", exp_in, "Output directory of a run")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--to", exp_out, "Destination directory")->required();
  exp->add_option("--format", format, "json | tum | both")
      ->check(CLI::IsMember({"json", "tum", "both"}))
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      if (!scene_file.empty()) {
        // The file sets the base; flags given explicitly still win.
        SceneSpec merged = parse_scene_spec(tools::read_text(scene_file));
        if (synth->count("--family")) merged.family = spec.family;
        if (synth->count("--trajectory")) merged.trajectory = spec.trajectory;
        if (synth->count("--frames")) merged.frames = spec.frames;
        if (synth->count("--scene-seed")) merged.seed = spec.seed;
        if (synth->count("--low-texture")) merged.low_texture = spec.low_texture;
        spec = merged;
      }
      const PipelineConfig cfg = synth_cfg.build();
      const SyntheticScene scene = generate_scene(spec);
      OraclePairSource oracle(scene, synth_noise.build(scene.diameter()), synth_noise.seed);
      const SequenceInput in = synthetic_sequence(scene);
      if (!input_dir.empty()) {
        tools::write_sequence(input_dir, in);
        tools::write_text(fs::path(input_dir) / "scene.json", scene_spec_json(spec) + "\n");
        write_pairs(fs::path(input_dir) / "pairs", scene, oracle);
      }
      const auto r = run_pipeline(in, cfg, oracle, quiet ? std::function<void(const FrameLog&)>{} : print_frame);
      finish(out_dir, r);
      tools::write_ground_truth(fs::path(out_dir) / "ground_truth.json", *in.ground_truth);
      tools::write_text(fs::path(out_dir) / "config.json", config_json(cfg) + "\n");
    } else if (*run) {
      const PipelineConfig cfg = run_cfg.build();
      const SequenceInput in = tools::read_sequence(seq_dir);
      std::unique_ptr<SyntheticScene> scene;
      std::unique_ptr<PairSource> pairs;
      if (oracle_mode) {
        scene = std::make_unique<SyntheticScene>(
            generate_scene(parse_scene_spec(tools::read_text(fs::path(seq_dir) / "scene.json"))));
        pairs = std::make_unique<OraclePairSource>(*scene, run_noise.build(scene->diameter()), run_noise.seed);
      } else {
        pairs = std::make_unique<DiskPairSource>(
            pairs_dir.empty() ? fs::path(seq_dir) / "pairs" : fs::path(pairs_dir), in.camera);
      }
      const auto r = run_pipeline(in, cfg, *pairs, quiet ? std::function<void(const FrameLog&)>{} : print_frame);
      finish(run_out, r);
      tools::write_text(fs::path(run_out) / "config.json", config_json(cfg) + "\n");
    } else if (*eval) {
      const GroundTruth gt = tools::read_ground_truth(gt_file);
      const std::vector<Pose> traj = read_trajectory_json(traj_file);
      std::vector<Vec3> centres;
      if (!model_file.empty())
        for (const Gaussian& g : read_ply(model_file)) centres.push_back(g.center);
      const MetricsReport rep = evaluate_trajectory(traj, gt, model_file.empty() ? nullptr : &centres);
      if (metrics_out.empty()) std::printf("%s\n", report_json(rep).c_str());
      else tools::write_text(metrics_out, report_json(rep) + "\n");
    } else if (*exp) {
      fs::create_directories(exp_out);
      const std::vector<Pose> traj = read_trajectory_json(fs::path(exp_in) / "trajectory.json");
      if (format != "tum") write_trajectory_json(fs::path(exp_out) / "trajectory.json", traj);
      if (format != "json") write_tum(fs::path(exp_out) / "trajectory.txt", traj);
      const fs::path model = fs::path(exp_in) / "model.ply";
      if (fs::exists(model)) write_ply(fs::path(exp_out) / "model.ply", read_ply(model));
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
