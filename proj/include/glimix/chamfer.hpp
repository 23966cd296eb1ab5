#pragma once

#include <vector>

#include "glimix/geometry.hpp"

namespace glimix {

struct ChamferParams {
  double sigma_c = 0.05;  // density bandwidth, scene units
  enum class Normalizer { kDrop, kDivideByN };
  /// kDrop absorbs the per-glimpse normalizer into the mixing weights and
  /// keeps the raw max density; kDivideByN applies the strict lower bound.
  Normalizer normalizer_mode = Normalizer::kDrop;
};

/// Per-point, per-glimpse mixture state. Object glimpses are indexed
/// 1..num_glimpses; storage index i-1 holds glimpse i. Index 0 is the scene
/// glimpse, represented by alpha0.
struct MixtureAssignment {
  int num_points = 0;
  int num_glimpses = 0;
  std::vector<std::vector<int>> members;     // per glimpse: point indices, ascending
  std::vector<std::vector<double>> pi;       // mask values in [0,1]
  std::vector<std::vector<double>> boundary; // soft boundary weights in [0,1]
  std::vector<double> z_pres;                // per glimpse, in [0,1]

  // filled by mixing_weights()
  std::vector<std::vector<double>> alpha;  // per glimpse/member
  std::vector<double> alpha0;              // per point
};

/// Predicted points per glimpse. Each predicted point belongs to exactly one
/// glimpse by construction.
struct GlimpseReconstruction {
  MatX3 scene_pred;                 // glimpse 0
  std::vector<MatX3> glimpse_pred;  // glimpses 1..n
};

/// Isotropic 3D Gaussian log-density of x under mean mu, std sigma_c.
double log_gaussian_density(const Vec3& x, const Vec3& mu, double sigma_c);

struct ForwardPointResult {
  double log_lik;
  int argmax;  // index of the selected predicted point
};

/// Glimpse-wise forward term: max over predicted points of the log density,
/// minus log(count) in kDivideByN mode. Ties keep the lowest index.
ForwardPointResult forward_point_loglik(const Vec3& x, const MatX3& preds,
                                        const ChamferParams& params);

/// Fills alpha / alpha0 from pi, boundary and z_pres:
/// w_i = z_pres_i * pi_i * b_i, alpha_i = (w_i / sum_j w_j) * w_i (0 when the
/// sum vanishes), alpha0 = 1 - sum_i alpha_i. Throws when any input weight is
/// outside [0, 1].
void mixing_weights(MixtureAssignment& assignment);

/// Smooth exit weight: 1 inside/on the box, Gaussian falloff in the per-axis
/// excess outside.
double soft_boundary(const Vec3& x, const BoundingBox& box, double tau);

/// Sum over points of log sum_i alpha_i exp(forward term). Glimpses with an
/// empty reconstruction contribute zero mass; a point with zero total mass is
/// an error.
double forward_scene_loglik(const PointCloud& cloud,
                            const GlimpseReconstruction& recon,
                            const MixtureAssignment& assignment,
                            const ChamferParams& params);

/// Sum over glimpses and predicted points of alpha at the matched input point
/// times the max log density over the glimpse's input points.
double backward_scene_loglik(const PointCloud& cloud,
                             const GlimpseReconstruction& recon,
                             const MixtureAssignment& assignment,
                             const ChamferParams& params);

double chamfer_loglik(const PointCloud& cloud,
                      const GlimpseReconstruction& recon,
                      const MixtureAssignment& assignment,
                      const ChamferParams& params);

/// Per-point argmax over {alpha0, alpha_1..alpha_n}; ties resolve to the
/// scene label 0, then the lowest glimpse index. Labels are 0..n.
std::vector<int> segment(const MixtureAssignment& assignment);

struct ChamferDistance {
  double forward_sum = 0.0;
  double backward_sum = 0.0;
  double forward_mean = 0.0;
  double backward_mean = 0.0;
};

/// Plain squared-distance Chamfer metric between two point sets.
ChamferDistance chamfer_distance(const MatX3& a, const MatX3& b);

}  // namespace glimix
