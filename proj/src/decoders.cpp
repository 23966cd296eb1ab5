#include "glimix/decoders.hpp"

#include <stdexcept>

namespace glimix {

void PGFConfig::validate() const {
  if (feature_dims.empty() || feature_dims.back() != 0)
    throw std::invalid_argument("last PGF layer must have feature dim 0");
  if (!(radius > 0.0) || !(noise_std > 0.0))
    throw std::invalid_argument("invalid PGF config");
}

void PresenceHeadConfig::validate() const {
  if (channels.size() < 2 || channels.back() != 1)
    throw std::invalid_argument(
        "presence head needs >= 2 layers ending in 1 logit");
  for (std::size_t i = 1; i < channels.size(); ++i)
    if (channels[i] > channels[i - 1])
      throw std::invalid_argument("presence channels must decrease");
  if (!(radius > 0.0)) throw std::invalid_argument("invalid presence radius");
}

PointGraphFlow PointGraphFlow::create(ParamStore& store,
                                      const std::string& name, int latent_dim,
                                      const PGFConfig& cfg, Rng& rng) {
  cfg.validate();
  PointGraphFlow pgf;
  pgf.cfg = cfg;
  int in_dim = latent_dim;
  for (std::size_t k = 0; k < cfg.feature_dims.size(); ++k) {
    PointGnn layer = PointGnn::create(
        store, name + ".layer" + std::to_string(k), in_dim,
        cfg.feature_dims[k], cfg.msg_dim, cfg.hidden, /*update_coords=*/true,
        rng);
    layer.offset_scale = 1.0 / cfg.radius;
    pgf.layers.push_back(layer);
    in_dim = cfg.feature_dims[k];
  }
  return pgf;
}

ad::Var PointGraphFlow::decode(ad::Tape& tape, ParamBinder& bind,
                               ad::Var z_what, int count, Rng& rng) const {
  if (count < 1) throw std::invalid_argument("requested point count must be >= 1");

  ad::Mat seeds(count, 3);
  for (int i = 0; i < count; ++i)
    for (int k = 0; k < 3; ++k) seeds(i, k) = cfg.noise_std * rng.normal();

  ad::Var pos = tape.constant(std::move(seeds), "pgf_seeds");
  ad::Var feats = tape.repeat_row(z_what, count);
  for (const PointGnn& layer : layers) {
    RadiusGraph graph =
        build_radius_graph(tape.val(pos), cfg.radius, cfg.max_neighbors);
    PointGnn::Result res =
        layer.apply(tape, bind, EdgeList::from_graph(graph), pos, feats);
    pos = res.positions;
    feats = res.feats;
  }
  return pos;
}

MaskDecoder MaskDecoder::create(ParamStore& store, const std::string& name,
                                int mask_dim, int hidden, int pyramid_depth,
                                Rng& rng) {
  MaskDecoder dec;
  dec.top_lin = Linear::create(store, name + ".top", mask_dim, hidden, rng);
  for (int k = 0; k < pyramid_depth + 1; ++k)
    dec.deconvs.push_back(PointDeconv::create(
        store, name + ".deconv" + std::to_string(k), hidden, hidden, rng));
  dec.head = Linear::create(store, name + ".head", hidden, 1, rng);
  return dec;
}

namespace {

ad::Var offsets_const(ad::Tape& tape, const MatX3& children,
                      const MatX3& parents, const std::vector<int>& parent_of) {
  MatX3 off(children.rows(), 3);
  for (int i = 0; i < children.rows(); ++i)
    off.row(i) = children.row(i) - parents.row(parent_of[i]);
  return tape.constant(off, "offsets");
}

}  // namespace

ad::Var MaskDecoder::apply(ad::Tape& tape, ParamBinder& bind, ad::Var z_mask,
                           const RegionPyramids& pyr) const {
  if (static_cast<int>(deconvs.size()) != pyr.depth + 1)
    throw std::invalid_argument("mask decoder does not match pyramid depth");
  if (tape.val(z_mask).rows() != pyr.num_regions)
    throw std::invalid_argument("mask decoder region mismatch");

  ad::Var feats = tape.silu(top_lin.apply(tape, bind, z_mask));
  // summaries -> top level -> ... -> level 0 -> raw points
  for (int k = pyr.depth - 1; k >= 0; --k) {
    const MatX3& parents = k == pyr.depth - 1 ? pyr.summaries
                                              : pyr.levels[k + 1].positions;
    ad::Var off = offsets_const(tape, pyr.levels[k].positions, parents,
                                pyr.levels[k].parent_next);
    feats = deconvs[pyr.depth - 1 - k].apply(tape, bind, off, feats,
                                             pyr.levels[k].parent_next);
  }
  ad::Var off = offsets_const(tape, pyr.raw_points, pyr.levels[0].positions,
                              pyr.raw_parent);
  feats = deconvs.back().apply(tape, bind, off, feats, pyr.raw_parent);
  return tape.sigmoid(head.apply(tape, bind, feats));
}

PresenceHead PresenceHead::create(ParamStore& store, const std::string& name,
                                  int feat_dim, const PresenceHeadConfig& cfg,
                                  Rng& rng) {
  cfg.validate();
  PresenceHead head;
  head.cfg = cfg;
  int in_dim = feat_dim;
  for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
    PointGnn layer = PointGnn::create(
        store, name + ".gnn" + std::to_string(k), in_dim, cfg.channels[k],
        cfg.msg_dim, cfg.hidden, /*update_coords=*/false, rng);
    layer.offset_scale = 1.0 / cfg.radius;
    head.layers.push_back(layer);
    in_dim = cfg.channels[k];
  }
  head.direct = Linear::create(store, name + ".direct", feat_dim, 1, rng);
  return head;
}

ad::Var PresenceHead::apply(ad::Tape& tape, ParamBinder& bind,
                            const MatX3& centers, ad::Var feats,
                            bool use_gnn) const {
  if (centers.rows() < 1)
    throw std::invalid_argument("presence head needs >= 1 glimpse");
  tape.marker("presence_begin");
  ad::Var logits;
  if (use_gnn) {
    RadiusGraph graph =
        build_radius_graph(centers, cfg.radius, cfg.max_neighbors);
    EdgeList edges = EdgeList::from_graph(graph);
    ad::Var pos = tape.constant(centers, "glimpse_centers");
    ad::Var state = feats;
    for (const PointGnn& layer : layers)
      state = layer.apply(tape, bind, edges, pos, state).feats;
    logits = state;
  } else {
    logits = direct.apply(tape, bind, feats);
  }
  tape.marker("presence_end");
  return logits;
}

}  // namespace glimix
