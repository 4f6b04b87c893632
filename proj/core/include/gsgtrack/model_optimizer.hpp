#pragma once

#include "gsgtrack/object_model.hpp"
#include "gsgtrack/objective.hpp"

#include <random>

namespace gsg {

struct ModelOptimizerSettings {
  double lr_position = 0.000032;
  double lr_log_scale = 0.005;
  double lr_rotation = 0.001;
  double lr_color = 0.01;
  double lr_opacity = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-15;
  double lambda_depth = 0.1;
  double lambda_silhouette = 0.0;
  // Density control, applied every `density_interval` steps.
  int density_interval = 25;
  // Mean screen-space positional gradient (per-pixel units of the summed L1)
  // above which a Gaussian is cloned or split.
  double densify_grad_threshold = 0.05;
  double split_screen_sigma = 3.0;  // px; larger candidates are split
  double min_opacity = 0.005;
  std::size_t max_gaussians = 40000;
  std::uint64_t seed = 0;
  RenderSettings render;

  bool all_rates_zero() const {
    return lr_position == 0 && lr_log_scale == 0 && lr_rotation == 0 && lr_color == 0 &&
           lr_opacity == 0;
  }
};

struct TrainingView {
  Pose pose;
  ViewTarget target;
};

// Adam over all Gaussian parameters of a model, with the moment buffers and
// densification statistics kept in sync as the model grows or shrinks.
class ModelOptimizer {
 public:
  ModelOptimizer(ObjectModel& model, const ModelOptimizerSettings& settings);

  // One descent step on the photometric + lambda_d depth + lambda_s
  // silhouette loss of a view.
  // Returns the loss before the step. Runs density control when due.
  double step(const TrainingView& view);
  void density_control();
  // Drops the Gaussians whose flag is false together with their optimizer
  // state. Use this instead of ObjectModel::keep_if while optimizing.
  void keep_if(const std::vector<bool>& keep);
  int iterations() const { return iterations_; }
  const ModelOptimizerSettings& settings() const { return settings_; }

 private:
  void sync_buffers();

  ObjectModel& model_;
  ModelOptimizerSettings settings_;
  std::vector<GaussianParams> m_, v_;
  std::vector<double> grad_accum_;
  std::vector<int> grad_count_;
  Pose last_pose_;
  Camera last_cam_;
  int iterations_ = 0;
  std::mt19937_64 rng_;
};

// Runs `iters` steps cycling through the views in order.
void optimize_model(ObjectModel& model, const std::vector<TrainingView>& views, int iters,
                    const ModelOptimizerSettings& settings);

}  // namespace gsg
