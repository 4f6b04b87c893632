#include "gsgtrack/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <variant>

namespace gsg {

namespace {

using Member = std::variant<int PipelineConfig::*, double PipelineConfig::*, bool PipelineConfig::*,
                            std::string PipelineConfig::*, std::uint64_t PipelineConfig::*>;

struct Entry {
  const char* name;
  const char* help;
  Member member;
};

const std::vector<Entry>& entries() {
  using C = PipelineConfig;
  static const std::vector<Entry> e = {
      {"seed", "seed of every stochastic stage", &C::seed},
      {"threads", "worker threads, 0 for all cores", &C::threads},
      {"crop_scale", "preprocessing scale factor K", &C::crop_scale},
      {"crop_width", "preprocessed width, 0 keeps the input width", &C::crop_width},
      {"crop_height", "preprocessed height, 0 keeps the input height", &C::crop_height},
      {"init_iters", "model iterations on frame 0", &C::init_iters},
      {"joint_iters", "joint refinement iterations per frame", &C::joint_iters},
      {"geo_iters", "graph solver iterations", &C::geo_iters},
      {"track_iters", "tracking iterations per frame", &C::track_iters},
      {"track_tol", "tracking step tolerance", &C::track_tol},
      {"model_steps_per_pose_step", "model steps between pose steps", &C::model_steps_per_pose_step},
      {"lr_position", "Gaussian position learning rate", &C::lr_position},
      {"lr_log_scale", "Gaussian log-scale learning rate", &C::lr_log_scale},
      {"lr_rotation", "Gaussian rotation learning rate", &C::lr_rotation},
      {"lr_color", "Gaussian colour learning rate", &C::lr_color},
      {"lr_opacity", "Gaussian opacity learning rate", &C::lr_opacity},
      {"density_interval", "steps between density control passes", &C::density_interval},
      {"densify_grad_threshold", "screen gradient that triggers densification", &C::densify_grad_threshold},
      {"densify_size_threshold", "screen sigma (px) above which Gaussians split", &C::densify_size_threshold},
      {"max_gaussians", "model size cap", &C::max_gaussians},
      {"max_scale_fraction", "largest initial sigma, fraction of the diameter", &C::max_scale_fraction},
      {"track_lr_rotation", "nominal tracking rotation step (rad)", &C::track_lr_rotation},
      {"track_lr_translation", "nominal tracking translation step", &C::track_lr_translation},
      {"divergence_bound", "masked L1 above which tracking is lost", &C::divergence_bound},
      {"lambda_d", "depth loss weight", &C::lambda_d},
      {"lambda_s", "silhouette loss weight", &C::lambda_s},
      {"pg_weight", "graph anchor weight in pose refinement", &C::pg_weight},
      {"grid_k", "sampler grid size K", &C::grid_k},
      {"gray_levels", "entropy histogram levels", &C::gray_levels},
      {"budget", "frame-0 sample budget", &C::budget},
      {"keyframe_budget", "samples added per later keyframe", &C::keyframe_budget},
      {"interpolants", "interpolated samples per point", &C::interpolants},
      {"keyframe_angle_deg", "rotation that promotes a keyframe (deg)", &C::keyframe_angle_deg},
      {"max_edges", "partner keyframes per frame", &C::max_edges},
      {"max_pair_angle_deg", "largest rotation between partners (deg)", &C::max_pair_angle_deg},
      {"min_confidence", "pixel confidence cutoff", &C::min_confidence},
      {"tau_r_deg", "pose check rotation threshold (deg)", &C::tau_r_deg},
      {"tau_t_fraction", "pose check translation threshold, fraction of object scale", &C::tau_t_fraction},
      {"tau_cd_fraction", "geometry check threshold, fraction of the diameter", &C::tau_cd_fraction},
      {"tau_c", "edge confidence threshold", &C::tau_c},
      {"use_pose_check", "prune edges by pose consistency", &C::use_pose_check},
      {"use_geometry_check", "prune edges by geometric similarity", &C::use_geometry_check},
      {"use_confidence_check", "prune edges by pixel credibility", &C::use_confidence_check},
      {"solver", "graph solver: lm or adam", &C::solver},
      {"history_interval", "keyframes between history refinements, 0 disables", &C::history_interval},
      {"prune_references", "reference views for mask pruning", &C::prune_references},
  };
  return e;
}

ConfigField::Kind kind_of(const Member& m) {
  switch (m.index()) {
    case 0: return ConfigField::Int;
    case 1: return ConfigField::Double;
    case 2: return ConfigField::Bool;
    case 3: return ConfigField::String;
    default: return ConfigField::Seed;
  }
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void check(bool ok, const char* name, const char* rule) {
  if (!ok) bad(std::string(name) + " must be " + rule);
}

}  // namespace

void PipelineConfig::validate() const {
  check(threads >= 0, "threads", ">= 0");
  check(crop_scale > 0, "crop_scale", "> 0");
  check(crop_width >= 0, "crop_width", ">= 0");
  check(crop_height >= 0, "crop_height", ">= 0");
  check(init_iters >= 0, "init_iters", ">= 0");
  check(joint_iters >= 0, "joint_iters", ">= 0");
  check(geo_iters >= 1, "geo_iters", ">= 1");
  check(track_iters >= 1, "track_iters", ">= 1");
  check(track_tol > 0, "track_tol", "> 0");
  check(model_steps_per_pose_step >= 0, "model_steps_per_pose_step", ">= 0");
  check(lr_position >= 0, "lr_position", ">= 0");
  check(lr_log_scale >= 0, "lr_log_scale", ">= 0");
  check(lr_rotation >= 0, "lr_rotation", ">= 0");
  check(lr_color >= 0, "lr_color", ">= 0");
  check(lr_opacity >= 0, "lr_opacity", ">= 0");
  check(density_interval >= 0, "density_interval", ">= 0");
  check(densify_grad_threshold > 0, "densify_grad_threshold", "> 0");
  check(densify_size_threshold > 0, "densify_size_threshold", "> 0");
  check(max_gaussians >= 1, "max_gaussians", ">= 1");
  check(max_scale_fraction > 0, "max_scale_fraction", "> 0");
  check(track_lr_rotation > 0, "track_lr_rotation", "> 0");
  check(track_lr_translation > 0, "track_lr_translation", "> 0");
  check(divergence_bound > 0, "divergence_bound", "> 0");
  check(lambda_d >= 0, "lambda_d", ">= 0");
  check(lambda_s >= 0, "lambda_s", ">= 0");
  check(pg_weight >= 0, "pg_weight", ">= 0");
  check(grid_k >= 1, "grid_k", ">= 1");
  check(gray_levels >= 2, "gray_levels", ">= 2");
  check(budget >= 1, "budget", ">= 1");
  check(keyframe_budget >= 0, "keyframe_budget", ">= 0");
  check(interpolants >= 0, "interpolants", ">= 0");
  check(keyframe_angle_deg >= 0 && keyframe_angle_deg < 180, "keyframe_angle_deg", "in [0, 180)");
  check(max_edges >= 0, "max_edges", ">= 0");
  check(max_pair_angle_deg > 0 && max_pair_angle_deg <= 180, "max_pair_angle_deg", "in (0, 180]");
  check(min_confidence >= 0, "min_confidence", ">= 0");
  check(tau_r_deg > 0, "tau_r_deg", "> 0");
  check(tau_t_fraction > 0, "tau_t_fraction", "> 0");
  check(tau_cd_fraction > 0, "tau_cd_fraction", "> 0");
  check(tau_c >= 0, "tau_c", ">= 0");
  check(solver == "lm" || solver == "adam", "solver", "lm or adam");
  check(history_interval >= 0, "history_interval", ">= 0");
  check(prune_references >= 1, "prune_references", ">= 1");
}

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    for (const auto& e : entries()) f.push_back({e.name, e.help, kind_of(e.member)});
    return f;
  }();
  return fields;
}

PipelineConfig parse_config(const std::string& text, const PipelineConfig& base) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) bad("config must be a JSON object");
  PipelineConfig c = base;
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find_if(entries().begin(), entries().end(),
                                 [&](const Entry& e) { return key == e.name; });
    if (it == entries().end()) bad("unknown key '" + key + "'");
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(c.*member)>;
          bool ok;
          if constexpr (std::is_same_v<T, bool>) ok = value.is_boolean();
          else if constexpr (std::is_same_v<T, std::string>) ok = value.is_string();
          else if constexpr (std::is_same_v<T, std::uint64_t>) ok = value.is_number_unsigned();
          else if constexpr (std::is_same_v<T, int>) ok = value.is_number_integer();
          else ok = value.is_number();
          if (!ok) bad("key '" + key + "' has the wrong type");
          c.*member = value.get<T>();
        },
        it->member);
  }
  c.validate();
  return c;
}

std::string config_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  for (const auto& e : entries()) std::visit([&](auto member) { j[e.name] = c.*member; }, e.member);
  return j.dump(2);
}

}  // namespace gsg
