#pragma once

#include <string>
#include <vector>

#include "glimix/autodiff.hpp"
#include "glimix/geometry.hpp"
#include "glimix/nn.hpp"

namespace glimix {

struct ProposalConfig {
  double l = 1.0;           // attention cell size, scene units
  double max_offset = 0.5;  // L
  Vec3 r_min = Vec3::Constant(0.2);
  Vec3 r_max = Vec3::Constant(1.0);
};

/// Deterministic box from cell latents: center offset tanh(z_where) * L,
/// apothem sigmoid(z_apothem)-interpolated between r_min and r_max.
BoundingBox propose_glimpse(const Vec3& cell_center, const Vec3& z_where,
                            const Vec3& z_apothem, const ProposalConfig& cfg);

/// Merged center-of-mass pyramids over several regions (cells, glimpses or a
/// whole scene), in whatever normalized frame the caller chose. Level k
/// subdivides each region's anchor cube into max(base_subdiv >> k, 1)^3.
struct RegionPyramids {
  int num_regions = 0;
  int depth = 0;
  int base_subdiv = 0;
  MatX3 raw_points;
  std::vector<int> raw_region;
  std::vector<int> raw_parent;  // raw point -> level-0 aggregation row
  struct Level {
    MatX3 positions;
    std::vector<int> region;
    std::vector<int> parent_next;  // to next level; last level: region id
  };
  std::vector<Level> levels;          // finest to coarsest
  MatX3 summaries;                    // per region, center of mass of top level
  std::vector<double> region_extent;  // anchor cube side per region
};

RegionPyramids build_region_pyramids(const std::vector<MatX3>& region_points,
                                     const std::vector<Vec3>& anchor_origins,
                                     const std::vector<double>& anchor_extents,
                                     int depth, int base_subdiv);

struct PyramidEncoderConfig {
  int depth = 2;
  int base_subdiv = 4;
  int hidden = 32;
  int msg_dim = 32;
  int out_dim = 64;
  double radius_factor = 2.0;  // graph radius = factor * sub-voxel size
  int max_neighbors = 16;
  bool cross_region = false;  // allow level graphs to span regions
};

/// Bottom-up PointConv + PointGnn stack over a RegionPyramids batch,
/// producing one summary feature per region.
struct PyramidEncoder {
  PyramidEncoderConfig cfg;
  std::vector<PointConv> convs;  // one per level (level 0 is feature-less)
  std::vector<PointGnn> gnns;    // one per level
  PointConv top_conv;

  static PyramidEncoder create(ParamStore& store, const std::string& name,
                               const PyramidEncoderConfig& cfg, Rng& rng);
  ad::Var apply(ad::Tape& tape, ParamBinder& bind,
                const RegionPyramids& pyr) const;
};

/// Per non-empty attention cell: z_where and z_apothem posteriors.
struct CellLatents {
  std::vector<Vec3i> cell_index;
  MatX3 cell_centers;  // scene units
  ad::Var where_mu, where_logvar;      // C x 3
  ad::Var apothem_mu, apothem_logvar;  // C x 3
};

struct VoxelGridEncoder {
  PyramidEncoder pyramid;
  Linear where_head;    // feat -> 6
  Linear apothem_head;  // feat -> 6

  static VoxelGridEncoder create(ParamStore& store, const std::string& name,
                                 const PyramidEncoderConfig& cfg, Rng& rng);
  CellLatents encode(ad::Tape& tape, ParamBinder& bind, const PointCloud& cloud,
                     const VoxelGrid& grid) const;
};

/// Output of batched glimpse encoding. Latent posteriors are stacked over
/// glimpses; the recorded pyramid feeds the mask decoder's skip path.
struct GlimpseLatents {
  ad::Var feats;  // G x feat_dim glimpse summary features
  ad::Var what_mu, what_logvar;  // G x A
  ad::Var mask_mu, mask_logvar;  // G x B
  RegionPyramids pyramids;
};

struct GlimpseEncoder {
  PyramidEncoder pyramid;
  Linear what_head;  // feat -> 2A
  Linear mask_head;  // feat -> 2B; unused by the scene encoder

  static GlimpseEncoder create(ParamStore& store, const std::string& name,
                               const PyramidEncoderConfig& cfg, int what_dim,
                               int mask_dim, Rng& rng);

  /// local_points: per glimpse, member coordinates in the glimpse-local
  /// normalized frame; anchor cubes are centered at 0 with the given extents.
  GlimpseLatents encode(ad::Tape& tape, ParamBinder& bind,
                        const std::vector<MatX3>& local_points,
                        const std::vector<double>& anchor_extents,
                        bool with_mask_head) const;
};

}  // namespace glimix
