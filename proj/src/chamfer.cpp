#include "glimix/chamfer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace glimix {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double log_norm_const(double sigma_c) {
  return -1.5 * std::log(kTwoPi * sigma_c * sigma_c);
}

void check_unit(double v, const char* what) {
  if (!(v >= 0.0) || !(v <= 1.0))
    throw std::invalid_argument(std::string(what) + " outside [0, 1]");
}

}  // namespace

double log_gaussian_density(const Vec3& x, const Vec3& mu, double sigma_c) {
  if (!(sigma_c > 0.0)) throw std::invalid_argument("sigma_c must be > 0");
  if (!x.allFinite() || !mu.allFinite())
    throw std::invalid_argument("non-finite input");
  return log_norm_const(sigma_c) -
         (x - mu).squaredNorm() / (2.0 * sigma_c * sigma_c);
}

ForwardPointResult forward_point_loglik(const Vec3& x, const MatX3& preds,
                                        const ChamferParams& params) {
  if (preds.rows() == 0)
    throw std::invalid_argument("glimpse has no reconstruction");
  int best = 0;
  double best_d = (x - Vec3(preds.row(0))).squaredNorm();
  for (int j = 1; j < preds.rows(); ++j) {
    const double d = (x - Vec3(preds.row(j))).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  double ll = log_norm_const(params.sigma_c) -
              best_d / (2.0 * params.sigma_c * params.sigma_c);
  if (params.normalizer_mode == ChamferParams::Normalizer::kDivideByN)
    ll -= std::log(static_cast<double>(preds.rows()));
  return {ll, best};
}

void mixing_weights(MixtureAssignment& a) {
  const int n = a.num_glimpses;
  if (static_cast<int>(a.members.size()) != n ||
      static_cast<int>(a.pi.size()) != n ||
      static_cast<int>(a.boundary.size()) != n ||
      static_cast<int>(a.z_pres.size()) != n)
    throw std::invalid_argument("assignment arrays disagree on glimpse count");

  for (double z : a.z_pres) check_unit(z, "z_pres");

  std::vector<double> wsum(a.num_points, 0.0);
  for (int i = 0; i < n; ++i) {
    if (a.pi[i].size() != a.members[i].size() ||
        a.boundary[i].size() != a.members[i].size())
      throw std::invalid_argument("per-glimpse arrays disagree on member count");
    for (std::size_t m = 0; m < a.members[i].size(); ++m) {
      check_unit(a.pi[i][m], "pi");
      check_unit(a.boundary[i][m], "boundary weight");
      wsum[a.members[i][m]] += a.z_pres[i] * a.pi[i][m] * a.boundary[i][m];
    }
  }

  a.alpha.assign(n, {});
  a.alpha0.assign(a.num_points, 1.0);
  for (int i = 0; i < n; ++i) {
    a.alpha[i].resize(a.members[i].size());
    for (std::size_t m = 0; m < a.members[i].size(); ++m) {
      const int x = a.members[i][m];
      const double w = a.z_pres[i] * a.pi[i][m] * a.boundary[i][m];
      const double bar = wsum[x] > 0.0 ? (w / wsum[x]) * w : 0.0;
      a.alpha[i][m] = bar;
      a.alpha0[x] -= bar;
    }
  }
}

double soft_boundary(const Vec3& x, const BoundingBox& box, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double excess = std::abs(x[k] - box.center[k]) - box.apothem[k];
    if (excess > 0.0) acc += excess * excess;
  }
  return std::exp(-acc / (2.0 * tau * tau));
}

double forward_scene_loglik(const PointCloud& cloud,
                            const GlimpseReconstruction& recon,
                            const MixtureAssignment& a,
                            const ChamferParams& params) {
  const int n_pts = cloud.size();
  if (a.num_points != n_pts)
    throw std::invalid_argument("assignment/cloud size mismatch");
  if (static_cast<int>(recon.glimpse_pred.size()) != a.num_glimpses)
    throw std::invalid_argument("reconstruction/assignment glimpse mismatch");
  if (a.alpha0.empty())
    throw std::invalid_argument("mixing_weights has not been applied");

  // Per point: log-density terms and weights of the covering glimpses.
  std::vector<std::vector<std::pair<double, double>>> terms(n_pts);
  const bool scene_has_pred = recon.scene_pred.rows() > 0;
  for (int x = 0; x < n_pts; ++x) {
    if (scene_has_pred) {
      const double ld =
          forward_point_loglik(cloud.positions.row(x), recon.scene_pred, params)
              .log_lik;
      terms[x].emplace_back(ld, a.alpha0[x]);
    }
  }
  for (int i = 0; i < a.num_glimpses; ++i) {
    if (recon.glimpse_pred[i].rows() == 0) continue;  // zero mass
    for (std::size_t m = 0; m < a.members[i].size(); ++m) {
      const int x = a.members[i][m];
      const double ld =
          forward_point_loglik(cloud.positions.row(x), recon.glimpse_pred[i],
                               params)
              .log_lik;
      terms[x].emplace_back(ld, a.alpha[i][m]);
    }
  }

  double total = 0.0;
  for (int x = 0; x < n_pts; ++x) {
    double c = -std::numeric_limits<double>::infinity();
    for (const auto& [ld, w] : terms[x]) c = std::max(c, ld);
    double mass = 0.0;
    if (std::isfinite(c)) {
      for (const auto& [ld, w] : terms[x]) mass += w * std::exp(ld - c);
    }
    if (!(mass > 0.0)) throw std::runtime_error("point uncovered");
    total += std::log(mass) + c;
  }
  return total;
}

double backward_scene_loglik(const PointCloud& cloud,
                             const GlimpseReconstruction& recon,
                             const MixtureAssignment& a,
                             const ChamferParams& params) {
  if (a.alpha0.empty())
    throw std::invalid_argument("mixing_weights has not been applied");
  const double lc = log_norm_const(params.sigma_c);
  const double inv = 1.0 / (2.0 * params.sigma_c * params.sigma_c);

  double total = 0.0;
  // scene glimpse: members are all input points
  for (int j = 0; j < recon.scene_pred.rows(); ++j) {
    const Vec3 xh = recon.scene_pred.row(j);
    int best = 0;
    double best_d = (xh - Vec3(cloud.positions.row(0))).squaredNorm();
    for (int x = 1; x < cloud.size(); ++x) {
      const double d = (xh - Vec3(cloud.positions.row(x))).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = x;
      }
    }
    total += a.alpha0[best] * (lc - best_d * inv);
  }
  for (int i = 0; i < a.num_glimpses; ++i) {
    if (recon.glimpse_pred[i].rows() == 0) continue;
    if (a.members[i].empty())
      throw std::runtime_error(
          "predicted point in a glimpse with zero input points");
    for (int j = 0; j < recon.glimpse_pred[i].rows(); ++j) {
      const Vec3 xh = recon.glimpse_pred[i].row(j);
      int best = 0;
      double best_d =
          (xh - Vec3(cloud.positions.row(a.members[i][0]))).squaredNorm();
      for (std::size_t m = 1; m < a.members[i].size(); ++m) {
        const double d =
            (xh - Vec3(cloud.positions.row(a.members[i][m]))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(m);
        }
      }
      total += a.alpha[i][best] * (lc - best_d * inv);
    }
  }
  return total;
}

double chamfer_loglik(const PointCloud& cloud,
                      const GlimpseReconstruction& recon,
                      const MixtureAssignment& assignment,
                      const ChamferParams& params) {
  return forward_scene_loglik(cloud, recon, assignment, params) +
         backward_scene_loglik(cloud, recon, assignment, params);
}

std::vector<int> segment(const MixtureAssignment& a) {
  if (a.alpha0.empty())
    throw std::invalid_argument("mixing_weights has not been applied");
  std::vector<int> labels(a.num_points, 0);
  std::vector<double> best = a.alpha0;
  for (int i = 0; i < a.num_glimpses; ++i) {
    for (std::size_t m = 0; m < a.members[i].size(); ++m) {
      const int x = a.members[i][m];
      if (a.alpha[i][m] > best[x]) {  // strict: ties stay with earlier label
        best[x] = a.alpha[i][m];
        labels[x] = i + 1;
      }
    }
  }
  return labels;
}

ChamferDistance chamfer_distance(const MatX3& a, const MatX3& b) {
  if (a.rows() == 0 || b.rows() == 0)
    throw std::invalid_argument("chamfer_distance: empty point set");
  ChamferDistance out;
  for (int i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b.rows(); ++j)
      best = std::min(best, (Vec3(a.row(i)) - Vec3(b.row(j))).squaredNorm());
    out.forward_sum += best;
  }
  for (int j = 0; j < b.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < a.rows(); ++i)
      best = std::min(best, (Vec3(a.row(i)) - Vec3(b.row(j))).squaredNorm());
    out.backward_sum += best;
  }
  out.forward_mean = out.forward_sum / static_cast<double>(a.rows());
  out.backward_mean = out.backward_sum / static_cast<double>(b.rows());
  return out;
}

}  // namespace glimix
