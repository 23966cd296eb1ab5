#include "glimix/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace glimix {

namespace {

PyramidEncoderConfig cell_pyramid_cfg(const ModelConfig& m) {
  PyramidEncoderConfig c;
  c.depth = m.cell_depth;
  c.base_subdiv = m.cell_subdiv;
  c.hidden = m.hidden;
  c.msg_dim = m.msg_dim;
  c.out_dim = m.feat_dim;
  c.radius_factor = m.radius_factor;
  c.max_neighbors = m.max_neighbors;
  c.cross_region = true;  // level graphs span neighboring cells
  return c;
}

PyramidEncoderConfig glimpse_pyramid_cfg(const ModelConfig& m) {
  PyramidEncoderConfig c = cell_pyramid_cfg(m);
  c.depth = m.glimpse_depth;
  c.base_subdiv = m.glimpse_subdiv;
  c.cross_region = false;  // glimpses encode independently
  return c;
}

PyramidEncoderConfig global_pyramid_cfg(const ModelConfig& m) {
  PyramidEncoderConfig c = glimpse_pyramid_cfg(m);
  c.depth = m.global_depth;
  c.base_subdiv = m.global_subdiv;
  return c;
}

PGFConfig scene_pgf_cfg(const ModelConfig& m) {
  PGFConfig c = m.pgf;
  c.noise_std = m.scene_pgf_noise_std;
  return c;
}

PresenceHeadConfig presence_cfg(const ModelConfig& m) {
  PresenceHeadConfig c = m.presence;
  c.radius = m.presence.radius * m.cell_size;  // stored in units of l
  return c;
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  Rng rng(mix_seed(init_seed, 0x9117));
  cell_enc_ = VoxelGridEncoder::create(store_, "cell_enc", cell_pyramid_cfg(cfg), rng);
  glimpse_enc_ = GlimpseEncoder::create(store_, "glimpse_enc",
                                        glimpse_pyramid_cfg(cfg),
                                        cfg.latent_what, cfg.latent_mask, rng);
  global_enc_ = GlimpseEncoder::create(store_, "global_enc",
                                       global_pyramid_cfg(cfg),
                                       cfg.latent_what, 0, rng);
  glimpse_pgf_ =
      PointGraphFlow::create(store_, "glimpse_pgf", cfg.latent_what, cfg.pgf, rng);
  scene_pgf_ = PointGraphFlow::create(store_, "scene_pgf", cfg.latent_what,
                                      scene_pgf_cfg(cfg), rng);
  mask_dec_ = MaskDecoder::create(store_, "mask_dec", cfg.latent_mask,
                                  cfg.hidden, cfg.glimpse_depth, rng);
  presence_ = PresenceHead::create(store_, "presence", cfg.feat_dim,
                                   presence_cfg(cfg), rng);
}

namespace {

ad::Mat gaussian_noise(Rng& rng, int rows, int cols, bool sample) {
  ad::Mat noise = ad::Mat::Zero(rows, cols);
  if (sample)
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) noise(r, c) = rng.normal();
  return noise;
}

ad::Mat logistic_noise(Rng& rng, int rows, bool sample) {
  ad::Mat noise = ad::Mat::Zero(rows, 1);
  if (sample)
    for (int r = 0; r < rows; ++r) {
      const double u = rng.uniform_open();
      noise(r, 0) = std::log(u) - std::log1p(-u);
    }
  return noise;
}

}  // namespace

ElboResult Model::elbo(ad::Tape& tape, ParamBinder& bind,
                       const PointCloud& cloud, const ElboOptions& opt) const {
  cloud.validate();
  const double l = cfg_.cell_size;
  const ProposalConfig prop = cfg_.proposal();
  const double tau = cfg_.tau();
  const double margin = cfg_.crop_margin();
  const int n_pts = cloud.size();
  Rng rng(mix_seed(opt.noise_seed, 0xe1b0));

  VoxelGrid grid = voxelize(cloud, l);
  if (grid.cells.empty())
    throw std::runtime_error("scene with zero non-empty cells");

  ElboResult res;
  res.diag.num_cells = static_cast<int>(grid.cells.size());
  const int n_cells = res.diag.num_cells;

  // --- cell latents and box proposals ---
  CellLatents cells = cell_enc_.encode(tape, bind, cloud, grid);
  ad::Var z_where =
      reparam_gaussian(tape, cells.where_mu, cells.where_logvar,
                       gaussian_noise(rng, n_cells, 3, opt.sample));
  ad::Var z_apothem =
      reparam_gaussian(tape, cells.apothem_mu, cells.apothem_logvar,
                       gaussian_noise(rng, n_cells, 3, opt.sample));

  ad::Var centers_all =
      tape.add(tape.constant(cells.cell_centers, "cell_centers"),
               tape.scalar_mul(tape.tanh(z_where), prop.max_offset));
  ad::Mat rmin_rows = prop.r_min.transpose().replicate(n_cells, 1);
  ad::Mat rspan_rows =
      (prop.r_max - prop.r_min).transpose().replicate(n_cells, 1);
  ad::Var apothem_all =
      tape.add(tape.mul(tape.sigmoid(z_apothem),
                        tape.constant(rspan_rows, "r_span")),
               tape.constant(rmin_rows, "r_min"));

  // --- crop with the dilated box; reject tiny proposals ---
  const ad::Mat& centers_val = tape.val(centers_all);
  const ad::Mat& apothem_val = tape.val(apothem_all);
  std::vector<int> accepted_cells;
  res.diag.num_proposed = n_cells;
  res.diag.glimpses.resize(n_cells);
  for (int c = 0; c < n_cells; ++c) {
    GlimpseInfo& info = res.diag.glimpses[c];
    info.cell_index = cells.cell_index[c];
    info.box.center = centers_val.row(c);
    info.box.apothem = apothem_val.row(c);
    BoundingBox dilated{info.box.center,
                        info.box.apothem + Vec3::Constant(margin)};
    info.members = crop_glimpse(cloud, dilated);
    info.accepted =
        static_cast<int>(info.members.size()) >= cfg_.min_glimpse_points;
    if (info.accepted) accepted_cells.push_back(c);
  }
  const int n_glimpses = static_cast<int>(accepted_cells.size());
  res.diag.num_accepted = n_glimpses;

  // --- glimpse encoding ---
  ad::Var what_mu, what_lv, mask_mu, mask_lv, z_what, z_mask;
  GlimpseLatents glatents;
  std::vector<MatX3> local_pts(n_glimpses);
  MatX3 glimpse_centers(n_glimpses, 3);
  if (n_glimpses > 0) {
    std::vector<double> extents(n_glimpses);
    for (int g = 0; g < n_glimpses; ++g) {
      const GlimpseInfo& info = res.diag.glimpses[accepted_cells[g]];
      res.members.push_back(info.members);
      glimpse_centers.row(g) = info.box.center;
      const double ext =
          2.0 * (info.box.apothem.maxCoeff() + margin) / l * (1.0 + 1e-9);
      extents[g] = ext;
      MatX3 pts(info.members.size(), 3);
      for (std::size_t i = 0; i < info.members.size(); ++i)
        pts.row(static_cast<Eigen::Index>(i)) =
            (Vec3(cloud.positions.row(info.members[i])) - info.box.center) / l;
      local_pts[g] = std::move(pts);
    }
    glatents = glimpse_enc_.encode(tape, bind, local_pts, extents, true);
    z_what = reparam_gaussian(
        tape, glatents.what_mu, glatents.what_logvar,
        gaussian_noise(rng, n_glimpses, cfg_.latent_what, opt.sample));
    z_mask = reparam_gaussian(
        tape, glatents.mask_mu, glatents.mask_logvar,
        gaussian_noise(rng, n_glimpses, cfg_.latent_mask, opt.sample));
  }

  // --- scene encoding ---
  const Vec3 centroid = cloud.positions.colwise().mean().transpose();
  MatX3 scene_local = cloud.positions;
  scene_local.rowwise() -= centroid.transpose();
  scene_local /= l;
  const double scene_extent =
      std::max(1e-6, (scene_local.colwise().maxCoeff() -
                      scene_local.colwise().minCoeff())
                         .maxCoeff()) *
      (1.0 + 1e-9);
  GlimpseLatents slatents = global_enc_.encode(
      tape, bind, {scene_local}, {scene_extent}, false);
  ad::Var z_what0 =
      reparam_gaussian(tape, slatents.what_mu, slatents.what_logvar,
                       gaussian_noise(rng, 1, cfg_.latent_what, opt.sample));

  // --- presence ---
  ad::Var pres_logits, pres_q;
  if (n_glimpses > 0) {
    pres_logits = presence_.apply(tape, bind, glimpse_centers, glatents.feats,
                                  cfg_.presence_gnn);
    pres_q = tape.sigmoid(pres_logits);
    res.z_pres = reparam_bernoulli(tape, pres_logits,
                                   logistic_noise(rng, n_glimpses, opt.sample),
                                   opt.temperature, opt.hard_presence);
  }

  // --- decoding ---
  std::vector<ad::Var> recon_local(n_glimpses);
  for (int g = 0; g < n_glimpses; ++g) {
    ad::Var z_row = tape.gather_rows(z_what, {g});
    const int m = static_cast<int>(res.members[g].size());
    recon_local[g] = glimpse_pgf_.decode(tape, bind, z_row, m, rng);
    ad::Var center_row = tape.gather_rows(centers_all, {accepted_cells[g]});
    res.recon.push_back(tape.add(tape.scalar_mul(recon_local[g], l),
                                 tape.repeat_row(center_row, m)));
  }
  ad::Var scene_local_recon = scene_pgf_.decode(tape, bind, z_what0, n_pts, rng);
  res.scene_recon = tape.add(
      tape.scalar_mul(scene_local_recon, l),
      tape.constant(centroid.transpose().replicate(n_pts, 1), "centroid"));

  // --- masks and soft boundary ---
  if (n_glimpses > 0) {
    ad::Var pi_all = mask_dec_.apply(tape, bind, z_mask, glatents.pyramids);
    int offset = 0;
    for (int g = 0; g < n_glimpses; ++g) {
      const int m = static_cast<int>(res.members[g].size());
      std::vector<int> rows(m);
      for (int i = 0; i < m; ++i) rows[i] = offset + i;
      res.pi.push_back(tape.gather_rows(pi_all, rows));
      offset += m;

      // b = exp(-sum_k relu(|x_k - c_k| - a_k)^2 / (2 tau^2))
      MatX3 member_pts(m, 3);
      for (int i = 0; i < m; ++i)
        member_pts.row(i) = cloud.positions.row(res.members[g][i]);
      ad::Var x_const = tape.constant(member_pts, "member_pts");
      ad::Var c_row = tape.gather_rows(centers_all, {accepted_cells[g]});
      ad::Var a_row = tape.gather_rows(apothem_all, {accepted_cells[g]});
      ad::Var diff = tape.abs(tape.sub(x_const, tape.repeat_row(c_row, m)));
      ad::Var excess = tape.relu(tape.sub(diff, tape.repeat_row(a_row, m)));
      ad::Var acc = tape.row_sum(tape.square(excess));
      res.boundary.push_back(
          tape.exp(tape.scalar_mul(acc, -1.0 / (2.0 * tau * tau))));
    }
  }

  // --- Chamfer likelihood ---
  ChamferGraphInput cin;
  cin.points = &cloud.positions;
  cin.members = res.members;
  cin.glimpse_preds = res.recon;
  cin.scene_pred = res.scene_recon;
  cin.pi = res.pi;
  cin.boundary = res.boundary;
  cin.z_pres = n_glimpses > 0 ? res.z_pres
                              : tape.constant(ad::Mat::Zero(0, 1), "z_pres");
  cin.params = cfg_.chamfer;
  ChamferGraph chamfer = build_chamfer_graph(tape, cin);
  res.forward_ll = chamfer.forward_ll;
  res.backward_ll = chamfer.backward_ll;
  res.alpha = chamfer.alpha;
  res.alpha0 = chamfer.alpha0;

  // --- KL terms ---
  ad::Var kl_where = kl_gaussian_sum(tape, cells.where_mu, cells.where_logvar,
                                     0.0, 1.0);
  ad::Var kl_apothem =
      kl_gaussian_sum(tape, cells.apothem_mu, cells.apothem_logvar,
                      cfg_.prior_apothem_mean, cfg_.prior_apothem_std);
  ad::Var kl_scene = kl_gaussian_sum(tape, slatents.what_mu,
                                     slatents.what_logvar, 0.0, 1.0);
  ad::Var kl_total = tape.add(tape.add(kl_where, kl_apothem), kl_scene);
  ad::Var kl_what, kl_mask, kl_pres;
  if (n_glimpses > 0) {
    ad::Var kl_what_rows = kl_gaussian_rows(tape, glatents.what_mu,
                                            glatents.what_logvar, 0.0, 1.0);
    ad::Var kl_mask_rows = kl_gaussian_rows(tape, glatents.mask_mu,
                                            glatents.mask_logvar, 0.0, 1.0);
    if (opt.kl_gate > 0.0) {
      // an absent glimpse carries (1 - g) of its object KL
      ad::Var gate = tape.scalar_add(tape.scalar_mul(pres_q, opt.kl_gate),
                                     1.0 - opt.kl_gate);
      kl_what = tape.sum_all(tape.mul(gate, kl_what_rows));
      kl_mask = tape.sum_all(tape.mul(gate, kl_mask_rows));
    } else {
      kl_what = tape.sum_all(kl_what_rows);
      kl_mask = tape.sum_all(kl_mask_rows);
    }
    kl_pres = kl_bernoulli_sum(tape, pres_q, opt.presence_prior);
    kl_total = tape.add(kl_total, tape.add(tape.add(kl_what, kl_mask), kl_pres));
  }
  res.kl_total = kl_total;
  res.elbo = tape.sub(tape.add(res.forward_ll, res.backward_ll),
                      tape.scalar_mul(kl_total, opt.kl_coeff));

  res.where_mu = cells.where_mu;
  res.where_logvar = cells.where_logvar;
  res.apothem_mu = cells.apothem_mu;
  res.apothem_logvar = cells.apothem_logvar;
  res.scene_mu = slatents.what_mu;
  res.scene_logvar = slatents.what_logvar;
  if (n_glimpses > 0) {
    res.what_mu = glatents.what_mu;
    res.what_logvar = glatents.what_logvar;
    res.mask_mu = glatents.mask_mu;
    res.mask_logvar = glatents.mask_logvar;
    res.pres_q = pres_q;
  }

  // --- diagnostics ---
  Diagnostics& d = res.diag;
  d.elbo = tape.val(res.elbo)(0, 0);
  d.forward_ll = tape.val(res.forward_ll)(0, 0);
  d.backward_ll = tape.val(res.backward_ll)(0, 0);
  d.kl_total = tape.val(kl_total)(0, 0);
  d.kl_where = tape.val(kl_where)(0, 0);
  d.kl_apothem = tape.val(kl_apothem)(0, 0);
  d.kl_scene = tape.val(kl_scene)(0, 0);
  if (n_glimpses > 0) {
    d.kl_what = tape.val(kl_what)(0, 0);
    d.kl_mask = tape.val(kl_mask)(0, 0);
    d.kl_pres = tape.val(kl_pres)(0, 0);
    d.active_glimpses = tape.val(res.z_pres).sum();
    for (int g = 0; g < n_glimpses; ++g) {
      GlimpseInfo& info = res.diag.glimpses[accepted_cells[g]];
      info.pres_q = tape.val(pres_q)(g, 0);
      info.z_pres = tape.val(res.z_pres)(g, 0);
    }
  }
  d.alpha0_mass = tape.val(res.alpha0).mean();
  return res;
}

InferResult Model::infer(const PointCloud& cloud, std::uint64_t seed) const {
  ad::Tape tape;
  ParamBinder bind(tape);
  ElboOptions opt;
  opt.sample = false;
  opt.hard_presence = true;
  opt.noise_seed = seed;
  ElboResult res = elbo(tape, bind, cloud, opt);

  InferResult out;
  out.diag = res.diag;

  MixtureAssignment& a = out.assignment;
  a.num_points = cloud.size();
  a.num_glimpses = static_cast<int>(res.members.size());
  a.members = res.members;
  for (int g = 0; g < a.num_glimpses; ++g) {
    const ad::Mat& pi = tape.val(res.pi[g]);
    const ad::Mat& b = tape.val(res.boundary[g]);
    a.pi.emplace_back(pi.data(), pi.data() + pi.rows());
    a.boundary.emplace_back(b.data(), b.data() + b.rows());
    a.z_pres.push_back(tape.val(res.z_pres)(g, 0));
  }
  mixing_weights(a);

  out.recon.scene_pred = tape.val(res.scene_recon);
  for (int g = 0; g < a.num_glimpses; ++g)
    out.recon.glimpse_pred.push_back(tape.val(res.recon[g]));

  out.raw_labels = segment(a);
  out.labels = remap_labels(out.raw_labels);
  return out;
}

MatX3 Model::reconstruct_scene(const PointCloud& cloud, int count,
                               std::uint64_t seed) const {
  cloud.validate();
  const double l = cfg_.cell_size;
  ad::Tape tape;
  ParamBinder bind(tape);
  Rng rng(mix_seed(seed, 0x9cf));

  const Vec3 centroid = cloud.positions.colwise().mean().transpose();
  MatX3 scene_local = cloud.positions;
  scene_local.rowwise() -= centroid.transpose();
  scene_local /= l;
  const double extent =
      std::max(1e-6, (scene_local.colwise().maxCoeff() -
                      scene_local.colwise().minCoeff())
                         .maxCoeff()) *
      (1.0 + 1e-9);
  GlimpseLatents latents =
      global_enc_.encode(tape, bind, {scene_local}, {extent}, false);
  ad::Var local = scene_pgf_.decode(tape, bind, latents.what_mu, count, rng);
  MatX3 out = tape.val(local) * l;
  out.rowwise() += centroid.transpose();
  return out;
}

std::vector<int> remap_labels(const std::vector<int>& labels) {
  std::map<int, int> remap;
  for (int v : labels) remap.emplace(v, 0);
  int next = 0;
  for (auto& [k, v] : remap) v = next++;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = remap[labels[i]];
  return out;
}

}  // namespace glimix
