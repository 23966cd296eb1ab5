#pragma once

#include <string>
#include <vector>

#include "glimix/autodiff.hpp"
#include "glimix/encoders.hpp"
#include "glimix/nn.hpp"
#include "glimix/rng.hpp"

namespace glimix {

struct PGFConfig {
  std::vector<int> feature_dims = {64, 32, 0};  // last layer emits coordinates only
  double radius = 0.3;     // per-layer radius graph, local units
  double noise_std = 0.1;  // seed point std, local units
  int max_neighbors = 8;
  int msg_dim = 32;
  int hidden = 32;

  void validate() const;
};

/// Variable-count point decoder: Gaussian seed points carrying the glimpse
/// latent as features, moved by PointGnn layers with a radius graph rebuilt on
/// the current positions before every layer. Emits exactly the requested
/// number of points.
struct PointGraphFlow {
  PGFConfig cfg;
  std::vector<PointGnn> layers;

  static PointGraphFlow create(ParamStore& store, const std::string& name,
                               int latent_dim, const PGFConfig& cfg, Rng& rng);
  /// z_what: 1 x A row; returns count x 3 positions in the local frame.
  ad::Var decode(ad::Tape& tape, ParamBinder& bind, ad::Var z_what, int count,
                 Rng& rng) const;
};

/// Inverse-pyramid mask decoder. Walks the recorded encoder pyramid from the
/// region summary down to the raw points using deconvolutions over the stored
/// aggregation-point coordinates, then a per-point head + sigmoid.
struct MaskDecoder {
  Linear top_lin;  // B -> hidden
  std::vector<PointDeconv> deconvs;  // coarsest to finest, then raw
  Linear head;  // hidden -> 1

  static MaskDecoder create(ParamStore& store, const std::string& name,
                            int mask_dim, int hidden, int pyramid_depth,
                            Rng& rng);
  /// z_mask: G x B (one row per region); returns mask values in (0,1), one
  /// row per raw point of the pyramid, in pyramid raw order.
  ad::Var apply(ad::Tape& tape, ParamBinder& bind, ad::Var z_mask,
                const RegionPyramids& pyr) const;
};

struct PresenceHeadConfig {
  std::vector<int> channels = {64, 32, 1};  // decreasing, last = 1 logit
  double radius = 1.5;  // glimpse-center graph radius, scene units
  int max_neighbors = 16;
  int msg_dim = 32;
  int hidden = 32;

  void validate() const;
};

/// Presence logits from glimpse summaries: message passing over the
/// glimpse-center radius graph (or a direct linear head in ablated mode).
struct PresenceHead {
  PresenceHeadConfig cfg;
  std::vector<PointGnn> layers;
  Linear direct;  // ablation path: feats -> 1

  static PresenceHead create(ParamStore& store, const std::string& name,
                             int feat_dim, const PresenceHeadConfig& cfg,
                             Rng& rng);
  ad::Var apply(ad::Tape& tape, ParamBinder& bind, const MatX3& centers,
                ad::Var feats, bool use_gnn) const;
};

}  // namespace glimix
