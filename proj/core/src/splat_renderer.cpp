#include "gsgtrack/splat_renderer.hpp"

#include "gsgtrack/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsg {

namespace {

double falloff_norm(double qc) { return 1.0 - std::exp(-0.5 * qc) * (1.0 + 0.5 * qc); }

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& p) {
  const double iz = 1.0 / p.z(), iz2 = iz * iz;
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx * iz, 0, -cam.fx * p.x() * iz2, 0, cam.fy * iz, -cam.fy * p.y() * iz2;
  return J;
}

}  // namespace

double splat_falloff(double q, double cutoff_sigma) {
  const double qc = cutoff_sigma * cutoff_sigma;
  if (q >= qc) return 0.0;
  const double ec = std::exp(-0.5 * qc);
  return (std::exp(-0.5 * q) - ec * (1.0 + 0.5 * (qc - q))) / falloff_norm(qc);
}

double splat_falloff_derivative(double q, double cutoff_sigma) {
  const double qc = cutoff_sigma * cutoff_sigma;
  if (q >= qc) return 0.0;
  const double ec = std::exp(-0.5 * qc);
  return 0.5 * (ec - std::exp(-0.5 * q)) / falloff_norm(qc);
}

SplatProjection project_gaussian(const Gaussian& g, const Pose& pose, const Camera& cam,
                                 const RenderSettings& settings) {
  const Vec3 p = pose * g.center;
  if (p.z() <= settings.near_plane) {
    throw Error(ErrorCode::BehindCamera, "gaussian centre is behind the near plane");
  }
  const auto J = projection_jacobian(cam, p);
  const Mat3& W = pose.rotation();
  SplatProjection out;
  out.mean = cam.project(p);
  out.covariance = J * W * g.covariance() * W.transpose() * J.transpose() +
                   settings.covariance_floor * Mat2::Identity();
  out.depth = p.z();
  return out;
}

RenderOutput render(const std::vector<Gaussian>& gaussians, const Pose& pose, const Camera& cam,
                    RenderCache* cache, const RenderSettings& settings) {
  RenderCache local;
  RenderCache& c = cache ? *cache : local;
  c.valid_ = false;
  c.pose_ = pose;
  c.camera_ = cam;
  c.settings_ = settings;

  const int H = cam.height, W = cam.width;
  const std::size_t n = gaussians.size();
  const double qc = settings.cutoff_sigma * settings.cutoff_sigma;
  c.projected_.assign(n, {});

  std::vector<int> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& pr = c.projected_[i];
    const Gaussian& g = gaussians[i];
    pr.cam_point = pose * g.center;
    if (!(pr.cam_point.z() > settings.near_plane)) continue;
    pr.cov3 = g.covariance();
    pr.cov_cam = pose.rotation() * pr.cov3 * pose.rotation().transpose();
    pr.J = projection_jacobian(cam, pr.cam_point);
    const Mat2 cov2 =
        pr.J * pr.cov_cam * pr.J.transpose() + settings.covariance_floor * Mat2::Identity();
    const double det = cov2.determinant();
    if (!(det > 0) || !std::isfinite(det)) continue;
    pr.conic = cov2.inverse();
    pr.mean = cam.project(pr.cam_point);
    const double half_tr = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double lambda_max =
        half_tr + std::sqrt(std::max(0.0, half_tr * half_tr - det));
    pr.max_sigma = std::sqrt(lambda_max);
    pr.opacity = g.opacity();
    pr.visible = true;
    order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return c.projected_[a].cam_point.z() < c.projected_[b].cam_point.z();
  });

  // Bin splats into per-pixel lists (two passes: count, then fill) so every
  // list is already in front-to-back order.
  const std::size_t npix = static_cast<std::size_t>(H) * W;
  auto for_each_covered = [&](int gi, auto&& fn) {
    const auto& pr = c.projected_[gi];
    const double r = settings.cutoff_sigma * pr.max_sigma;
    const int x0 = std::max(0, static_cast<int>(std::ceil(pr.mean.x() - r)));
    const int x1 = std::min(W - 1, static_cast<int>(std::floor(pr.mean.x() + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(pr.mean.y() - r)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(pr.mean.y() + r)));
    for (int y = y0; y <= y1; ++y) {
      const double dy = y - pr.mean.y();
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - pr.mean.x();
        const double q = pr.conic(0, 0) * dx * dx + 2.0 * pr.conic(0, 1) * dx * dy +
                         pr.conic(1, 1) * dy * dy;
        if (q < qc) fn(static_cast<std::size_t>(y) * W + x, q);
      }
    }
  };
  c.pixel_begin_.assign(npix + 1, 0);
  for (int gi : order) for_each_covered(gi, [&](std::size_t p, double) { ++c.pixel_begin_[p + 1]; });
  std::partial_sum(c.pixel_begin_.begin(), c.pixel_begin_.end(), c.pixel_begin_.begin());
  c.entries_.resize(c.pixel_begin_[npix]);
  {
    std::vector<std::size_t> cursor(c.pixel_begin_.begin(), c.pixel_begin_.end() - 1);
    for (int gi : order) {
      for_each_covered(gi, [&](std::size_t p, double q) {
        c.entries_[cursor[p]++] = {gi, q, 0.0, 0.0};
      });
    }
  }

  RenderOutput out{Image(H, W, 3), ScalarMap(H, W, 1), ScalarMap(H, W, 1)};
  c.pixel_used_.assign(npix, 0);
  parallel_bands(H, settings.threads, [&](int yb, int ye, int) {
    for (std::size_t p = static_cast<std::size_t>(yb) * W; p < static_cast<std::size_t>(ye) * W;
         ++p) {
      double T = 1.0;
      Vec3 color = Vec3::Zero();
      double depth = 0, alpha = 0;
      std::uint32_t used = 0;
      for (std::size_t k = c.pixel_begin_[p]; k < c.pixel_begin_[p + 1]; ++k) {
        auto& e = c.entries_[k];
        const auto& pr = c.projected_[e.gaussian];
        const double a = pr.opacity * splat_falloff(e.q, settings.cutoff_sigma);
        e.alpha = a;
        e.transmittance = T;
        const double w = a * T;
        color += w * gaussians[e.gaussian].color;
        depth += w * pr.cam_point.z();
        alpha += w;
        T *= 1.0 - a;
        ++used;
        if (T < settings.min_transmittance) break;
      }
      c.pixel_used_[p] = used;
      for (int ch = 0; ch < 3; ++ch) out.color.at(p, ch) = color(ch);
      out.depth.at(p) = depth;
      out.alpha.at(p) = alpha;
    }
  });
  c.valid_ = true;
  return out;
}

struct RenderBackwardAccess {
  static RenderGradients run(const std::vector<Gaussian>& gaussians, const RenderCache& c,
                             const Image& grad_color, const ScalarMap& grad_depth,
                             const ScalarMap& grad_alpha);
};

RenderGradients RenderBackwardAccess::run(const std::vector<Gaussian>& gaussians,
                                          const RenderCache& c, const Image& grad_color,
                                          const ScalarMap& grad_depth,
                                          const ScalarMap& grad_alpha) {
  if (!c.valid_ || c.projected_.size() != gaussians.size()) {
    throw Error(ErrorCode::MissingForwardCache,
                "render_backward needs the cache of a forward pass over the same gaussians");
  }
  const Camera& cam = c.camera_;
  const int H = cam.height, W = cam.width;
  const std::size_t n = gaussians.size();
  const bool has_c = !grad_color.empty(), has_d = !grad_depth.empty(),
             has_a = !grad_alpha.empty();
  if ((has_c && !grad_color.same_shape(H, W)) || (has_d && !grad_depth.same_shape(H, W)) ||
      (has_a && !grad_alpha.same_shape(H, W))) {
    throw Error(ErrorCode::PreconditionFailed, "upstream gradient size does not match camera");
  }
  const double cutoff = c.settings_.cutoff_sigma;

  struct Acc {
    Vec2 mean = Vec2::Zero();
    Mat2 conic = Mat2::Zero();
    double depth = 0;
    Vec3 color = Vec3::Zero();
    double opacity = 0;
  };
  const int threads = std::max(1, std::min(c.settings_.threads, H));
  std::vector<std::vector<Acc>> partial(threads, std::vector<Acc>(n));

  parallel_bands(H, threads, [&](int yb, int ye, int tid) {
    auto& acc = partial[tid];
    for (int y = yb; y < ye; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const Vec3 gc = has_c ? Vec3(grad_color.at(p, 0), grad_color.at(p, 1),
                                     grad_color.at(p, 2))
                              : Vec3::Zero();
        const double gd = has_d ? grad_depth.at(p) : 0.0;
        const double ga = has_a ? grad_alpha.at(p) : 0.0;
        if (gc.isZero(0) && gd == 0 && ga == 0) continue;
        const std::size_t begin = c.pixel_begin_[p];
        double behind = 0;  // sum over later entries of v_k a_k T_k
        for (std::size_t k = begin + c.pixel_used_[p]; k-- > begin;) {
          const auto& e = c.entries_[k];
          const auto& pr = c.projected_[e.gaussian];
          const double z = pr.cam_point.z();
          const double v = gc.dot(gaussians[e.gaussian].color) + gd * z + ga;
          const double w = e.alpha * e.transmittance;
          const double dL_da = v * e.transmittance - behind / (1.0 - e.alpha);
          behind += v * w;

          Acc& a = acc[e.gaussian];
          a.color += gc * w;
          a.depth += gd * w;
          const double fall = splat_falloff(e.q, cutoff);
          a.opacity += dL_da * fall * pr.opacity * (1.0 - pr.opacity);
          const double dL_dq = dL_da * pr.opacity * splat_falloff_derivative(e.q, cutoff);
          const Vec2 d(x - pr.mean.x(), y - pr.mean.y());
          a.mean += -2.0 * dL_dq * (pr.conic * d);
          a.conic += dL_dq * d * d.transpose();
        }
      }
    }
  });
  std::vector<Acc>& acc = partial[0];
  for (int t = 1; t < threads; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      acc[i].mean += partial[t][i].mean;
      acc[i].conic += partial[t][i].conic;
      acc[i].depth += partial[t][i].depth;
      acc[i].color += partial[t][i].color;
      acc[i].opacity += partial[t][i].opacity;
    }
  }

  RenderGradients out;
  out.gaussians.assign(n, GaussianParams::Zero());
  out.mean2d.assign(n, Vec2::Zero());
  const Pose& pose = c.pose_;
  const Mat3& Wr = pose.rotation();
  const Mat96 J_rot = pose_jacobian_rotation(pose);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& pr = c.projected_[i];
    if (!pr.visible) continue;
    const Acc& a = acc[i];
    GaussianParams& gp = out.gaussians[i];
    gp.segment<3>(param::kColor) = a.color;
    gp(param::kOpacity) = a.opacity;
    out.mean2d[i] = a.mean;

    // Screen covariance -> camera point, view rotation and world covariance.
    const Mat2 G_cov2 = -pr.conic * a.conic * pr.conic;
    const Mat3 G_cov_cam = pr.J.transpose() * G_cov2 * pr.J;
    const Eigen::Matrix<double, 2, 3> G_J = 2.0 * G_cov2 * pr.J * pr.cov_cam;
    const Mat3 G_W = 2.0 * G_cov_cam * Wr * pr.cov3;
    const Mat3 G_cov3 = Wr.transpose() * G_cov_cam * Wr;

    const Vec3& pc = pr.cam_point;
    const double iz = 1.0 / pc.z(), iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 g_p;
    g_p.x() = a.mean.x() * cam.fx * iz - G_J(0, 2) * cam.fx * iz2;
    g_p.y() = a.mean.y() * cam.fy * iz - G_J(1, 2) * cam.fy * iz2;
    g_p.z() = -a.mean.x() * cam.fx * pc.x() * iz2 - a.mean.y() * cam.fy * pc.y() * iz2 +
              a.depth - G_J(0, 0) * cam.fx * iz2 - G_J(1, 1) * cam.fy * iz2 +
              G_J(0, 2) * 2.0 * cam.fx * pc.x() * iz3 + G_J(1, 2) * 2.0 * cam.fy * pc.y() * iz3;

    out.pose += pose_jacobian_point(pose, pc).transpose() * g_p;
    out.pose += J_rot.transpose() * Eigen::Map<const Eigen::Matrix<double, 9, 1>>(G_W.data());
    gp.segment<3>(param::kCenter) = Wr.transpose() * g_p;

    // World covariance R S^2 R^T -> log-scales and quaternion.
    const Gaussian& g = gaussians[i];
    const double qn = g.rotation.norm();
    const Vec4 q = g.rotation / qn;
    const Mat3 Rq = quaternion_to_matrix(q);
    const Vec3 s2 = (2.0 * g.log_scale).array().exp();
    for (int k = 0; k < 3; ++k) {
      gp(param::kLogScale + k) = 2.0 * s2(k) * Rq.col(k).dot(G_cov3 * Rq.col(k));
    }
    const Mat3 G = 2.0 * G_cov3 * Rq * s2.asDiagonal();
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Vec4 gq;
    gq(0) = 2 * (-z * G(0, 1) + y * G(0, 2) + z * G(1, 0) - x * G(1, 2) - y * G(2, 0) +
                 x * G(2, 1));
    gq(1) = 2 * (y * G(0, 1) + z * G(0, 2) + y * G(1, 0) - 2 * x * G(1, 1) - w * G(1, 2) +
                 z * G(2, 0) + w * G(2, 1) - 2 * x * G(2, 2));
    gq(2) = 2 * (-2 * y * G(0, 0) + x * G(0, 1) + w * G(0, 2) + x * G(1, 0) + z * G(1, 2) -
                 w * G(2, 0) + z * G(2, 1) - 2 * y * G(2, 2));
    gq(3) = 2 * (-2 * z * G(0, 0) - w * G(0, 1) + x * G(0, 2) + w * G(1, 0) - 2 * z * G(1, 1) +
                 y * G(1, 2) + x * G(2, 0) + y * G(2, 1));
    gp.segment<4>(param::kRotation) = (gq - q * q.dot(gq)) / qn;
  }
  return out;
}

RenderGradients render_backward(const std::vector<Gaussian>& gaussians, const RenderCache& cache,
                                const Image& grad_color, const ScalarMap& grad_depth,
                                const ScalarMap& grad_alpha) {
  return RenderBackwardAccess::run(gaussians, cache, grad_color, grad_depth, grad_alpha);
}

}  // namespace gsg
