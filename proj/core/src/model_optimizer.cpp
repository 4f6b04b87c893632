#include "gsgtrack/model_optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace gsg {

ModelOptimizer::ModelOptimizer(ObjectModel& model, const ModelOptimizerSettings& settings)
    : model_(model), settings_(settings), rng_(settings.seed) {
  sync_buffers();
}

void ModelOptimizer::sync_buffers() {
  const std::size_t n = model_.size();
  m_.resize(n, GaussianParams::Zero());
  v_.resize(n, GaussianParams::Zero());
  grad_accum_.resize(n, 0.0);
  grad_count_.resize(n, 0);
}

void ModelOptimizer::keep_if(const std::vector<bool>& keep) {
  sync_buffers();
  if (keep.size() != model_.size()) {
    throw Error(ErrorCode::PreconditionFailed, "keep_if: flag count differs from model size");
  }
  std::size_t w = 0;
  for (std::size_t r = 0; r < keep.size(); ++r) {
    if (!keep[r]) continue;
    m_[w] = m_[r];
    v_[w] = v_[r];
    grad_accum_[w] = grad_accum_[r];
    grad_count_[w] = grad_count_[r];
    ++w;
  }
  model_.keep_if(keep);
  m_.resize(w);
  v_.resize(w);
  grad_accum_.resize(w);
  grad_count_.resize(w);
}

double ModelOptimizer::step(const TrainingView& view) {
  sync_buffers();
  const LossWeights w{1.0, settings_.lambda_depth, settings_.lambda_silhouette};
  const ViewLoss loss =
      evaluate_view(model_.gaussians, view.pose, view.target, w, true, settings_.render);
  ++iterations_;
  last_pose_ = view.pose;
  last_cam_ = view.target.cam;

  GaussianParams lr;
  lr.segment<3>(param::kCenter).setConstant(settings_.lr_position);
  lr.segment<3>(param::kLogScale).setConstant(settings_.lr_log_scale);
  lr.segment<4>(param::kRotation).setConstant(settings_.lr_rotation);
  lr.segment<3>(param::kColor).setConstant(settings_.lr_color);
  lr(param::kOpacity) = settings_.lr_opacity;
  const double b1 = settings_.beta1, b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, iterations_), c2 = 1.0 - std::pow(b2, iterations_);
  const double npix = static_cast<double>(count_true(*view.target.mask));

  for (std::size_t i = 0; i < model_.size(); ++i) {
    const GaussianParams& g = loss.grads.gaussians[i];
    if (!g.isZero(0)) {
      grad_accum_[i] += loss.grads.mean2d[i].norm() * npix;
      ++grad_count_[i];
    }
    if (settings_.all_rates_zero()) continue;
    m_[i] = b1 * m_[i] + (1 - b1) * g;
    v_[i] = b2 * v_[i] + (1 - b2) * g.cwiseAbs2();
    const GaussianParams update =
        lr.cwiseProduct((m_[i] / c1).cwiseQuotient(((v_[i] / c2).cwiseSqrt().array() +
                                                    settings_.epsilon).matrix()));
    Gaussian& gs = model_.gaussians[i];
    GaussianParams p = gs.params() - update;
    gs = Gaussian::from_params(p);
    gs.color = gs.color.cwiseMax(0.0).cwiseMin(1.0);
    const double qn = gs.rotation.norm();
    if (qn > 1e-12) gs.rotation /= qn;
  }
  if (!settings_.all_rates_zero() && settings_.density_interval > 0 &&
      iterations_ % settings_.density_interval == 0) {
    density_control();
  }
  return loss.total;
}

void ModelOptimizer::density_control() {
  sync_buffers();
  const std::size_t n = model_.size();
  std::vector<bool> keep(n, true);
  std::vector<Gaussian> born;
  std::vector<int> born_epoch;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = model_.gaussians[i];
    if (g.opacity() < settings_.min_opacity) {
      keep[i] = false;
      continue;
    }
    if (grad_count_[i] == 0 || n + born.size() >= settings_.max_gaussians) continue;
    if (grad_accum_[i] / grad_count_[i] < settings_.densify_grad_threshold) continue;
    double screen_sigma = 0;
    try {
      const SplatProjection s = project_gaussian(g, last_pose_, last_cam_, settings_.render);
      screen_sigma = std::sqrt(s.covariance.eigenvalues().real().maxCoeff());
    } catch (const Error&) {
      continue;
    }
    if (screen_sigma > settings_.split_screen_sigma) {
      const Mat3 R = g.rotation_matrix();
      const Vec3 s = g.scale();
      for (int k = 0; k < 2; ++k) {
        Gaussian child = g;
        const Vec3 offset(normal(rng_), normal(rng_), normal(rng_));
        child.center = g.center + R * s.cwiseProduct(offset);
        child.log_scale = g.log_scale.array() - std::log(1.6);
        born.push_back(child);
        born_epoch.push_back(model_.insertion_epoch[i]);
      }
      keep[i] = false;
    } else {
      // Both copies take opacity 1 - sqrt(1 - a) so the coincident pair
      // composites to the original opacity.
      Gaussian twin = g;
      twin.opacity_logit = logit(std::clamp(1.0 - std::sqrt(1.0 - g.opacity()), 1e-6, 1 - 1e-6));
      model_.gaussians[i] = twin;
      born.push_back(twin);
      born_epoch.push_back(model_.insertion_epoch[i]);
    }
  }
  // Moments follow their Gaussians; newborns start from zero.
  std::vector<GaussianParams> m, v;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) continue;
    m.push_back(m_[i]);
    v.push_back(v_[i]);
  }
  model_.keep_if(keep);
  for (std::size_t k = 0; k < born.size(); ++k) {
    model_.push_back(born[k], born_epoch[k]);
    m.push_back(GaussianParams::Zero());
    v.push_back(GaussianParams::Zero());
  }
  m_ = std::move(m);
  v_ = std::move(v);
  grad_accum_.assign(model_.size(), 0.0);
  grad_count_.assign(model_.size(), 0);
}

void optimize_model(ObjectModel& model, const std::vector<TrainingView>& views, int iters,
                    const ModelOptimizerSettings& settings) {
  if (iters <= 0 || views.empty() || model.empty()) return;
  ModelOptimizer opt(model, settings);
  for (int t = 0; t < iters; ++t) opt.step(views[static_cast<std::size_t>(t) % views.size()]);
}

}  // namespace gsg
