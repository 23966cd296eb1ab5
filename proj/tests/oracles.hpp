// Brute-force reference implementations used by unit and acceptance tests.
// These deliberately avoid the library's computation paths: direct loops,
// no log-sum-exp shifting, no inner-product distance trick.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "glimix/autodiff.hpp"
#include "glimix/chamfer.hpp"
#include "glimix/geometry.hpp"
#include "glimix/nn.hpp"
#include "glimix/rng.hpp"

namespace oracle {

using glimix::ChamferParams;
using glimix::GlimpseReconstruction;
using glimix::MatX3;
using glimix::MixtureAssignment;
using glimix::PointCloud;
using glimix::Vec3;

inline double density(const Vec3& x, const Vec3& mu, double sigma) {
  const double two_pi = 6.283185307179586476925286766559;
  return std::pow(two_pi * sigma * sigma, -1.5) *
         std::exp(-(x - mu).squaredNorm() / (2.0 * sigma * sigma));
}

inline double max_density(const Vec3& x, const MatX3& preds, double sigma) {
  double best = -1.0;
  for (int j = 0; j < preds.rows(); ++j)
    best = std::max(best, density(x, preds.row(j), sigma));
  return best;
}

/// alpha weights per the printed formula, straight loops.
inline void mixing(MixtureAssignment& a) {
  std::vector<double> wsum(a.num_points, 0.0);
  for (int i = 0; i < a.num_glimpses; ++i)
    for (std::size_t m = 0; m < a.members[i].size(); ++m)
      wsum[a.members[i][m]] += a.z_pres[i] * a.pi[i][m] * a.boundary[i][m];
  a.alpha.assign(a.num_glimpses, {});
  a.alpha0.assign(a.num_points, 1.0);
  for (int i = 0; i < a.num_glimpses; ++i) {
    a.alpha[i].resize(a.members[i].size());
    for (std::size_t m = 0; m < a.members[i].size(); ++m) {
      const int x = a.members[i][m];
      const double w = a.z_pres[i] * a.pi[i][m] * a.boundary[i][m];
      a.alpha[i][m] = wsum[x] > 0.0 ? w * w / wsum[x] : 0.0;
      a.alpha0[x] -= a.alpha[i][m];
    }
  }
}

inline double forward_loglik(const PointCloud& cloud,
                             const GlimpseReconstruction& recon,
                             const MixtureAssignment& a,
                             const ChamferParams& params) {
  const double sigma = params.sigma_c;
  double total = 0.0;
  for (int x = 0; x < cloud.size(); ++x) {
    double mix = 0.0;
    if (recon.scene_pred.rows() > 0) {
      double d = max_density(cloud.positions.row(x), recon.scene_pred, sigma);
      if (params.normalizer_mode == ChamferParams::Normalizer::kDivideByN)
        d /= static_cast<double>(recon.scene_pred.rows());
      mix += a.alpha0[x] * d;
    }
    for (int i = 0; i < a.num_glimpses; ++i) {
      if (recon.glimpse_pred[i].rows() == 0) continue;
      for (std::size_t m = 0; m < a.members[i].size(); ++m) {
        if (a.members[i][m] != x) continue;
        double d =
            max_density(cloud.positions.row(x), recon.glimpse_pred[i], sigma);
        if (params.normalizer_mode == ChamferParams::Normalizer::kDivideByN)
          d /= static_cast<double>(recon.glimpse_pred[i].rows());
        mix += a.alpha[i][m] * d;
      }
    }
    if (!(mix > 0.0)) throw std::runtime_error("oracle: point uncovered");
    total += std::log(mix);
  }
  return total;
}

inline double backward_loglik(const PointCloud& cloud,
                              const GlimpseReconstruction& recon,
                              const MixtureAssignment& a,
                              const ChamferParams& params) {
  const double sigma = params.sigma_c;
  double total = 0.0;
  for (int j = 0; j < recon.scene_pred.rows(); ++j) {
    const Vec3 xh = recon.scene_pred.row(j);
    double best = -1.0;
    int best_x = -1;
    for (int x = 0; x < cloud.size(); ++x) {
      const double d = density(xh, cloud.positions.row(x), sigma);
      if (d > best) {
        best = d;
        best_x = x;
      }
    }
    total += a.alpha0[best_x] * std::log(best);
  }
  for (int i = 0; i < a.num_glimpses; ++i) {
    for (int j = 0; j < recon.glimpse_pred[i].rows(); ++j) {
      const Vec3 xh = recon.glimpse_pred[i].row(j);
      double best = -1.0;
      int best_m = -1;
      for (std::size_t m = 0; m < a.members[i].size(); ++m) {
        const double d =
            density(xh, cloud.positions.row(a.members[i][m]), sigma);
        if (d > best) {
          best = d;
          best_m = static_cast<int>(m);
        }
      }
      total += a.alpha[i][best_m] * std::log(best);
    }
  }
  return total;
}

/// Pair-counting adjusted Rand index over ground-truth foreground points.
inline double ari(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::vector<std::size_t> fg;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] >= 1) fg.push_back(i);
  const std::size_t n = fg.size();
  if (n < 2) return 1.0;
  double a11 = 0.0, a10 = 0.0, a01 = 0.0;  // same/same, same pred only, same true only
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = p + 1; q < n; ++q) {
      const bool sp = pred[fg[p]] == pred[fg[q]];
      const bool st = truth[fg[p]] == truth[fg[q]];
      if (sp && st) a11 += 1.0;
      else if (sp) a10 += 1.0;
      else if (st) a01 += 1.0;
    }
  const double total = static_cast<double>(n) * (n - 1) / 2.0;
  const double sum_a = a11 + a10;  // same-pred pairs
  const double sum_b = a11 + a01;  // same-true pairs
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  if (std::abs(maximum - expected) < 1e-12) return 1.0;
  return (a11 - expected) / (maximum - expected);
}

/// Direct per-segment max-IoU covering over foreground points.
inline double covering(const std::vector<int>& pred,
                       const std::vector<int>& truth, bool weighted) {
  std::vector<int> gt_labels, pred_labels;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1) continue;
    gt_labels.push_back(truth[i]);
    if (pred[i] != 0) pred_labels.push_back(pred[i]);
  }
  if (gt_labels.empty()) throw std::runtime_error("oracle: no foreground");
  std::sort(gt_labels.begin(), gt_labels.end());
  gt_labels.erase(std::unique(gt_labels.begin(), gt_labels.end()),
                  gt_labels.end());
  std::sort(pred_labels.begin(), pred_labels.end());
  pred_labels.erase(std::unique(pred_labels.begin(), pred_labels.end()),
                    pred_labels.end());
  if (pred_labels.empty()) return 0.0;

  double acc = 0.0, wtotal = 0.0;
  for (int g : gt_labels) {
    double best = 0.0;
    double gsize = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (truth[i] == g) gsize += 1.0;
    for (int p : pred_labels) {
      double inter = 0.0, uni = 0.0;
      for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 1) continue;
        const bool in_g = truth[i] == g;
        const bool in_p = pred[i] == p;
        if (in_g && in_p) inter += 1.0;
        if (in_g || in_p) uni += 1.0;
      }
      best = std::max(best, inter / uni);
    }
    const double w = weighted ? gsize : 1.0;
    acc += w * best;
    wtotal += w;
  }
  return acc / wtotal;
}

/// Central finite differences on tape leaves. The builder receives a tape and
/// the current leaf values and must return a 1x1 root.
struct GradCheck {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline GradCheck check_gradients(
    std::vector<glimix::ad::Mat> leaf_values,
    const std::function<glimix::ad::Var(glimix::ad::Tape&,
                                        std::vector<glimix::ad::Var>&)>& build,
    double h = 1e-5, double floor_scale = 1e-6) {
  namespace ad = glimix::ad;
  GradCheck out;

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (const ad::Mat& v : leaf_values) leaves.push_back(tape.leaf(v));
  ad::Var root = build(tape, leaves);
  tape.backward(root);
  std::vector<ad::Mat> analytic;
  for (ad::Var v : leaves) analytic.push_back(tape.grad(v));

  double scale = 0.0;
  for (const ad::Mat& g : analytic) scale = std::max(scale, g.cwiseAbs().maxCoeff());
  const double floor = std::max(scale, 1.0) * floor_scale;

  for (std::size_t k = 0; k < leaf_values.size(); ++k) {
    for (Eigen::Index idx = 0; idx < leaf_values[k].size(); ++idx) {
      auto eval = [&](double delta) {
        std::vector<ad::Mat> shifted = leaf_values;
        shifted[k](idx) += delta;
        ad::Tape t2;
        std::vector<ad::Var> l2;
        for (const ad::Mat& v : shifted) l2.push_back(t2.leaf(v));
        return t2.val(build(t2, l2))(0, 0);
      };
      const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
      const double a = analytic[k](idx);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
    }
  }
  return out;
}

/// Central finite differences over every scalar of a ParamStore. The builder
/// must construct the graph from the store's current values and return a 1x1
/// root.
inline GradCheck check_param_gradients(
    glimix::ParamStore& store,
    const std::function<glimix::ad::Var(glimix::ad::Tape&,
                                        glimix::ParamBinder&)>& build,
    double h = 1e-5, double floor_scale = 1e-6) {
  namespace ad = glimix::ad;
  GradCheck out;

  store.zero_grad();
  {
    ad::Tape tape;
    glimix::ParamBinder bind(tape);
    ad::Var root = build(tape, bind);
    tape.backward(root);
    bind.accumulate_grads();
  }
  double scale = 0.0;
  for (const auto& e : store.entries())
    scale = std::max(scale, e.grad.cwiseAbs().maxCoeff());
  const double floor = std::max(scale, 1.0) * floor_scale;

  auto eval = [&] {
    ad::Tape tape;
    glimix::ParamBinder bind(tape);
    return tape.val(build(tape, bind))(0, 0);
  };
  for (auto& e : store.entries()) {
    for (Eigen::Index idx = 0; idx < e.value.size(); ++idx) {
      const double saved = e.value(idx);
      e.value(idx) = saved + h;
      const double fp = eval();
      e.value(idx) = saved - h;
      const double fm = eval();
      e.value(idx) = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = e.grad(idx);
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
    }
  }
  return out;
}

}  // namespace oracle
