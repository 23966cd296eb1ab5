#include "glimix/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace glimix {

BoundingBox propose_glimpse(const Vec3& cell_center, const Vec3& z_where,
                            const Vec3& z_apothem, const ProposalConfig& cfg) {
  if (!(cfg.max_offset > 0.0) || !(cfg.r_min.minCoeff() > 0.0) ||
      !((cfg.r_max - cfg.r_min).minCoeff() > 0.0))
    throw std::invalid_argument("invalid proposal config");
  BoundingBox box;
  for (int k = 0; k < 3; ++k) {
    box.center[k] = cell_center[k] + std::tanh(z_where[k]) * cfg.max_offset;
    const double t = 1.0 / (1.0 + std::exp(-z_apothem[k]));
    box.apothem[k] = t * (cfg.r_max[k] - cfg.r_min[k]) + cfg.r_min[k];
  }
  return box;
}

RegionPyramids build_region_pyramids(const std::vector<MatX3>& region_points,
                                     const std::vector<Vec3>& anchor_origins,
                                     const std::vector<double>& anchor_extents,
                                     int depth, int base_subdiv) {
  const int n_regions = static_cast<int>(region_points.size());
  if (n_regions == 0) throw std::invalid_argument("no regions");

  RegionPyramids out;
  out.num_regions = n_regions;
  out.depth = depth;
  out.base_subdiv = base_subdiv;
  out.region_extent = anchor_extents;
  out.levels.resize(depth);

  int total_raw = 0;
  for (const MatX3& pts : region_points) total_raw += static_cast<int>(pts.rows());
  out.raw_points.resize(total_raw, 3);
  out.raw_region.resize(total_raw);
  out.raw_parent.assign(total_raw, -1);

  std::vector<VoxelPyramid> per_region(n_regions);
  std::vector<int> raw_offset(n_regions, 0);
  std::vector<std::vector<int>> level_offset(depth,
                                             std::vector<int>(n_regions, 0));
  int at = 0;
  std::vector<int> level_count(depth, 0);
  for (int r = 0; r < n_regions; ++r) {
    if (region_points[r].rows() == 0)
      throw std::invalid_argument("empty region");
    raw_offset[r] = at;
    out.raw_points.middleRows(at, region_points[r].rows()) = region_points[r];
    for (int i = 0; i < region_points[r].rows(); ++i) out.raw_region[at + i] = r;
    at += static_cast<int>(region_points[r].rows());

    per_region[r] = build_voxel_pyramid(region_points[r], depth, base_subdiv,
                                        anchor_origins[r], anchor_extents[r]);
    for (int k = 0; k < depth; ++k) {
      level_offset[k][r] = level_count[k];
      level_count[k] += static_cast<int>(per_region[r].levels[k].positions.rows());
    }
  }

  for (int k = 0; k < depth; ++k) {
    RegionPyramids::Level& level = out.levels[k];
    level.positions.resize(level_count[k], 3);
    level.region.resize(level_count[k]);
    level.parent_next.assign(level_count[k], -1);
    for (int r = 0; r < n_regions; ++r) {
      const PyramidLevel& src = per_region[r].levels[k];
      const int off = level_offset[k][r];
      level.positions.middleRows(off, src.positions.rows()) = src.positions;
      for (int i = 0; i < src.positions.rows(); ++i) level.region[off + i] = r;
    }
  }

  // child -> parent maps with merged row offsets
  for (int r = 0; r < n_regions; ++r) {
    const VoxelPyramid& pyr = per_region[r];
    for (std::size_t c = 0; c < pyr.levels[0].child_parent.size(); ++c)
      out.raw_parent[raw_offset[r] + static_cast<int>(c)] =
          level_offset[0][r] + pyr.levels[0].child_parent[c];
    for (int k = 0; k + 1 < depth; ++k) {
      const auto& next_parent = pyr.levels[k + 1].child_parent;
      for (std::size_t c = 0; c < next_parent.size(); ++c)
        out.levels[k].parent_next[level_offset[k][r] + static_cast<int>(c)] =
            level_offset[k + 1][r] + next_parent[c];
    }
    // top level points aggregate into the region summary
    const int top = depth - 1;
    const int n_top = static_cast<int>(pyr.levels[top].positions.rows());
    for (int c = 0; c < n_top; ++c)
      out.levels[top].parent_next[level_offset[top][r] + c] = r;
  }

  out.summaries = MatX3::Zero(n_regions, 3);
  std::vector<double> top_counts(n_regions, 0.0);
  const RegionPyramids::Level& top = out.levels[depth - 1];
  for (int i = 0; i < top.positions.rows(); ++i) {
    out.summaries.row(top.region[i]) += top.positions.row(i);
    top_counts[top.region[i]] += 1.0;
  }
  for (int r = 0; r < n_regions; ++r) out.summaries.row(r) /= top_counts[r];
  return out;
}

PyramidEncoder PyramidEncoder::create(ParamStore& store,
                                      const std::string& name,
                                      const PyramidEncoderConfig& cfg,
                                      Rng& rng) {
  PyramidEncoder enc;
  enc.cfg = cfg;
  for (int k = 0; k < cfg.depth; ++k) {
    enc.convs.push_back(PointConv::create(store,
                                          name + ".conv" + std::to_string(k),
                                          k == 0 ? 0 : cfg.hidden, cfg.hidden,
                                          rng));
    enc.gnns.push_back(PointGnn::create(store, name + ".gnn" + std::to_string(k),
                                        cfg.hidden, cfg.hidden, cfg.msg_dim,
                                        cfg.hidden, false, rng));
  }
  enc.top_conv = PointConv::create(store, name + ".top", cfg.hidden,
                                   cfg.out_dim, rng);
  return enc;
}

namespace {

/// Graph edges for one pyramid level: within regions, or across all regions
/// when the encoder is configured for it.
EdgeList level_edges(const RegionPyramids& pyr, int level,
                     const PyramidEncoderConfig& cfg) {
  const RegionPyramids::Level& lvl = pyr.levels[level];
  const int subdiv = std::max(pyr.base_subdiv >> level, 1);
  EdgeList edges;
  if (cfg.cross_region) {
    const double radius =
        cfg.radius_factor * pyr.region_extent[0] / subdiv;
    edges = EdgeList::from_graph(
        build_radius_graph(lvl.positions, radius, cfg.max_neighbors));
  } else {
    std::vector<std::vector<int>> rows(pyr.num_regions);
    for (int i = 0; i < lvl.positions.rows(); ++i)
      rows[lvl.region[i]].push_back(i);
    for (int r = 0; r < pyr.num_regions; ++r) {
      if (rows[r].size() < 2) continue;
      MatX3 sub(rows[r].size(), 3);
      for (std::size_t i = 0; i < rows[r].size(); ++i)
        sub.row(static_cast<Eigen::Index>(i)) = lvl.positions.row(rows[r][i]);
      const double radius = cfg.radius_factor * pyr.region_extent[r] / subdiv;
      RadiusGraph g = build_radius_graph(sub, radius, cfg.max_neighbors);
      for (const auto& [u, v] : g.edges) {
        edges.src.push_back(rows[r][u]);
        edges.dst.push_back(rows[r][v]);
        edges.src.push_back(rows[r][v]);
        edges.dst.push_back(rows[r][u]);
      }
    }
  }
  return edges;
}

ad::Var child_offsets(ad::Tape& tape, const MatX3& children,
                      const MatX3& parents, const std::vector<int>& parent_of) {
  MatX3 off(children.rows(), 3);
  for (int i = 0; i < children.rows(); ++i)
    off.row(i) = children.row(i) - parents.row(parent_of[i]);
  return tape.constant(off, "offsets");
}

}  // namespace

ad::Var PyramidEncoder::apply(ad::Tape& tape, ParamBinder& bind,
                              const RegionPyramids& pyr) const {
  if (pyr.depth != cfg.depth)
    throw std::invalid_argument("pyramid depth mismatch");

  ad::Var feats;
  for (int k = 0; k < cfg.depth; ++k) {
    const MatX3& parents = pyr.levels[k].positions;
    const MatX3& children = k == 0 ? pyr.raw_points : pyr.levels[k - 1].positions;
    const std::vector<int>& parent_of =
        k == 0 ? pyr.raw_parent : pyr.levels[k - 1].parent_next;
    ad::Var offsets = child_offsets(tape, children, parents, parent_of);
    feats = convs[k].apply(tape, bind, offsets,
                           k == 0 ? std::nullopt : std::optional<ad::Var>(feats),
                           parent_of, static_cast<int>(parents.rows()));

    EdgeList edges = level_edges(pyr, k, cfg);
    ad::Var pos = tape.constant(parents, "level_pos");
    PointGnn::Result res = gnns[k].apply(tape, bind, edges, pos, feats);
    feats = res.feats;
  }

  const int top = cfg.depth - 1;
  ad::Var offsets = child_offsets(tape, pyr.levels[top].positions,
                                  pyr.summaries, pyr.levels[top].parent_next);
  return top_conv.apply(tape, bind, offsets, feats,
                        pyr.levels[top].parent_next, pyr.num_regions);
}

VoxelGridEncoder VoxelGridEncoder::create(ParamStore& store,
                                          const std::string& name,
                                          const PyramidEncoderConfig& cfg,
                                          Rng& rng) {
  VoxelGridEncoder enc;
  enc.pyramid = PyramidEncoder::create(store, name + ".pyr", cfg, rng);
  enc.where_head = Linear::create(store, name + ".where", cfg.out_dim, 6, rng);
  enc.apothem_head =
      Linear::create(store, name + ".apothem", cfg.out_dim, 6, rng);
  return enc;
}

CellLatents VoxelGridEncoder::encode(ad::Tape& tape, ParamBinder& bind,
                                     const PointCloud& cloud,
                                     const VoxelGrid& grid) const {
  const int n_cells = static_cast<int>(grid.cells.size());
  if (n_cells == 0) throw std::runtime_error("scene with zero non-empty cells");

  const double l = grid.cell_size;
  std::vector<MatX3> region_points(n_cells);
  std::vector<Vec3> anchors(n_cells);
  std::vector<double> extents(n_cells, 1.0);
  CellLatents out;
  out.cell_centers.resize(n_cells, 3);
  for (int c = 0; c < n_cells; ++c) {
    const VoxelCell& cell = grid.cells[c];
    out.cell_index.push_back(cell.index);
    out.cell_centers.row(c) = cell.center;
    MatX3 pts(cell.points.size(), 3);
    for (std::size_t i = 0; i < cell.points.size(); ++i)
      pts.row(static_cast<Eigen::Index>(i)) =
          cloud.positions.row(cell.points[i]) / l;
    region_points[c] = std::move(pts);
    anchors[c] = grid.origin / l + cell.index.cast<double>();
  }

  RegionPyramids pyr = build_region_pyramids(
      region_points, anchors, extents, pyramid.cfg.depth, pyramid.cfg.base_subdiv);
  ad::Var summary = pyramid.apply(tape, bind, pyr);

  ad::Var where = where_head.apply(tape, bind, summary);
  ad::Var apothem = apothem_head.apply(tape, bind, summary);
  out.where_mu = tape.slice_cols(where, 0, 3);
  out.where_logvar = tape.clamp(tape.slice_cols(where, 3, 3), -8.0, 8.0);
  out.apothem_mu = tape.slice_cols(apothem, 0, 3);
  out.apothem_logvar = tape.clamp(tape.slice_cols(apothem, 3, 3), -8.0, 8.0);
  return out;
}

GlimpseEncoder GlimpseEncoder::create(ParamStore& store,
                                      const std::string& name,
                                      const PyramidEncoderConfig& cfg,
                                      int what_dim, int mask_dim, Rng& rng) {
  GlimpseEncoder enc;
  enc.pyramid = PyramidEncoder::create(store, name + ".pyr", cfg, rng);
  enc.what_head =
      Linear::create(store, name + ".what", cfg.out_dim, 2 * what_dim, rng);
  if (mask_dim > 0)
    enc.mask_head =
        Linear::create(store, name + ".mask", cfg.out_dim, 2 * mask_dim, rng);
  return enc;
}

GlimpseLatents GlimpseEncoder::encode(ad::Tape& tape, ParamBinder& bind,
                                      const std::vector<MatX3>& local_points,
                                      const std::vector<double>& anchor_extents,
                                      bool with_mask_head) const {
  const int n = static_cast<int>(local_points.size());
  std::vector<Vec3> anchors(n);
  for (int r = 0; r < n; ++r)
    anchors[r] = Vec3::Constant(-0.5 * anchor_extents[r]);

  GlimpseLatents out;
  out.pyramids = build_region_pyramids(local_points, anchors, anchor_extents,
                                       pyramid.cfg.depth,
                                       pyramid.cfg.base_subdiv);
  out.feats = pyramid.apply(tape, bind, out.pyramids);

  const int a = what_head.out_dim() / 2;
  ad::Var what = what_head.apply(tape, bind, out.feats);
  out.what_mu = tape.slice_cols(what, 0, a);
  out.what_logvar = tape.clamp(tape.slice_cols(what, a, a), -8.0, 8.0);
  if (with_mask_head) {
    const int b = mask_head.out_dim() / 2;
    ad::Var mask = mask_head.apply(tape, bind, out.feats);
    out.mask_mu = tape.slice_cols(mask, 0, b);
    out.mask_logvar = tape.clamp(tape.slice_cols(mask, b, b), -8.0, 8.0);
  }
  return out;
}

}  // namespace glimix
