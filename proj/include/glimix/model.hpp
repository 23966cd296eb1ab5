#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "glimix/autodiff.hpp"
#include "glimix/chamfer.hpp"
#include "glimix/chamfer_graph.hpp"
#include "glimix/decoders.hpp"
#include "glimix/encoders.hpp"
#include "glimix/geometry.hpp"
#include "glimix/nn.hpp"

namespace glimix {

struct ModelConfig {
  double cell_size = 1.0;

  int latent_what = 64;  // A
  int latent_mask = 64;  // B
  int feat_dim = 64;
  int hidden = 32;
  int msg_dim = 32;

  int cell_depth = 2;
  int cell_subdiv = 4;
  int glimpse_depth = 2;
  int glimpse_subdiv = 4;
  int global_depth = 3;
  int global_subdiv = 8;
  double radius_factor = 2.0;
  int max_neighbors = 16;

  double max_offset_factor = 0.5;  // L = factor * l
  double r_min_factor = 0.2;
  double r_max_factor = 1.0;
  int min_glimpse_points = 5;

  ChamferParams chamfer;
  double tau_factor = 0.1;       // tau = factor * l
  double crop_margin_taus = 3.0; // crop dilation, units of tau

  PGFConfig pgf;                    // local (cell-normalized) units
  double scene_pgf_noise_std = 1.0; // seed std of the layout decoder
  PresenceHeadConfig presence;      // radius in units of l
  bool presence_gnn = true;

  // priors
  double prior_apothem_mean = -1.0;  // pre-sigmoid, shrinks boxes
  double prior_apothem_std = 0.5;

  ProposalConfig proposal() const {
    ProposalConfig p;
    p.l = cell_size;
    p.max_offset = max_offset_factor * cell_size;
    p.r_min = Vec3::Constant(r_min_factor * cell_size);
    p.r_max = Vec3::Constant(r_max_factor * cell_size);
    return p;
  }
  double tau() const { return tau_factor * cell_size; }
  double crop_margin() const { return crop_margin_taus * tau(); }
};

struct ElboOptions {
  bool sample = true;          // false: posterior means
  bool hard_presence = false;  // threshold z_pres at q >= 0.5
  double temperature = 1.0;
  double presence_prior = 0.5;
  double kl_coeff = 1.0;
  /// Presence gating of the per-glimpse z_what/z_mask KL: each glimpse pays
  /// (1 - g) + g * q of its KL, g in [0, 1]. At g = 1 an absent glimpse is
  /// KL-free; g = 0 recovers ungated KL.
  double kl_gate = 1.0;
  std::uint64_t noise_seed = 0;
};

struct GlimpseInfo {
  Vec3i cell_index;
  BoundingBox box;
  std::vector<int> members;  // dilated-crop point indices
  bool accepted = false;
  double pres_q = 0.0;
  double z_pres = 0.0;
};

struct Diagnostics {
  double elbo = 0.0, forward_ll = 0.0, backward_ll = 0.0, kl_total = 0.0;
  double kl_where = 0.0, kl_apothem = 0.0, kl_what = 0.0, kl_mask = 0.0;
  double kl_pres = 0.0, kl_scene = 0.0;
  int num_cells = 0;
  int num_proposed = 0;
  int num_accepted = 0;
  double active_glimpses = 0.0;  // sum of sampled z_pres
  double alpha0_mass = 0.0;      // mean scene weight
  std::vector<GlimpseInfo> glimpses;
};

/// Tape handles for everything downstream consumers need (gradients,
/// segmentation, reconstruction export).
struct ElboResult {
  ad::Var elbo, forward_ll, backward_ll, kl_total;
  std::vector<std::vector<int>> members;  // accepted glimpses
  std::vector<ad::Var> pi, boundary, alpha;
  ad::Var alpha0;
  std::vector<ad::Var> recon;  // scene coords
  ad::Var scene_recon;
  ad::Var z_pres;
  // posterior parameters, for diagnostics and independent re-assembly
  ad::Var where_mu, where_logvar, apothem_mu, apothem_logvar;
  ad::Var what_mu, what_logvar, mask_mu, mask_logvar;
  ad::Var scene_mu, scene_logvar;
  ad::Var pres_q;
  Diagnostics diag;
};

struct InferResult {
  std::vector<int> labels;      // contiguous ids, 0 = scene
  std::vector<int> raw_labels;  // glimpse-indexed labels from segment()
  GlimpseReconstruction recon;
  MixtureAssignment assignment;
  Diagnostics diag;
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  /// Full differentiable forward pass; throws on empty scenes.
  ElboResult elbo(ad::Tape& tape, ParamBinder& bind, const PointCloud& cloud,
                  const ElboOptions& opt) const;

  /// Deterministic inference: posterior means, hard presence.
  InferResult infer(const PointCloud& cloud, std::uint64_t seed = 0) const;

  /// Global-VAE reconstruction of a whole cloud at an arbitrary point count
  /// (posterior-mean scene latent, fresh decoder seed points).
  MatX3 reconstruct_scene(const PointCloud& cloud, int count,
                          std::uint64_t seed = 0) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  VoxelGridEncoder cell_enc_;
  GlimpseEncoder glimpse_enc_;
  GlimpseEncoder global_enc_;
  PointGraphFlow glimpse_pgf_;
  PointGraphFlow scene_pgf_;
  MaskDecoder mask_dec_;
  PresenceHead presence_;
};

/// Contiguous relabeling: distinct labels sorted ascending map to 0,1,2,...
std::vector<int> remap_labels(const std::vector<int>& labels);

}  // namespace glimix
