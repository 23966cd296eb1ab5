#include "glimix/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace glimix {

ParamStore::Entry* ParamStore::add(const std::string& name, int rows, int cols,
                                   double init_std, Rng& rng) {
  if (by_name_.count(name))
    throw std::invalid_argument("duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  e.value.resize(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      e.value(r, c) = init_std == 0.0 ? 0.0 : init_std * rng.normal();
  e.grad = ad::Mat::Zero(rows, cols);
  e.adam_m = ad::Mat::Zero(rows, cols);
  e.adam_v = ad::Mat::Zero(rows, cols);
  entries_.push_back(std::move(e));
  Entry* ptr = &entries_.back();
  by_name_[name] = ptr;
  return ptr;
}

ParamStore::Entry* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

void ParamStore::zero_grad() {
  for (Entry& e : entries_) e.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

ad::Var ParamBinder::operator()(ParamStore::Entry* e) {
  auto it = cache_.find(e);
  if (it != cache_.end()) return it->second;
  ad::Var v = tape_->leaf(e->value, "param");
  cache_.emplace(e, v);
  used_.emplace_back(e, v);
  return v;
}

void ParamBinder::accumulate_grads(double scale) {
  for (auto& [e, v] : used_) e->grad += scale * tape_->grad(v);
}

Linear Linear::create(ParamStore& store, const std::string& name, int in,
                      int out, Rng& rng) {
  Linear lin;
  lin.w = store.add(name + ".w", in, out, 1.0 / std::sqrt(std::max(1, in)), rng);
  lin.b = store.add(name + ".b", 1, out, 0.0, rng);
  return lin;
}

ad::Var Linear::apply(ad::Tape& tape, ParamBinder& bind, ad::Var x) const {
  return tape.linear(x, bind(w), bind(b));
}

PointConv PointConv::create(ParamStore& store, const std::string& name,
                            int in_dim, int out_dim, Rng& rng) {
  PointConv conv;
  conv.offset_lin = Linear::create(store, name + ".off", 3, out_dim, rng);
  if (in_dim > 0)
    conv.feat_lin = Linear::create(store, name + ".feat", in_dim, out_dim, rng);
  return conv;
}

ad::Var PointConv::apply(ad::Tape& tape, ParamBinder& bind, ad::Var offsets,
                         std::optional<ad::Var> feats,
                         const std::vector<int>& parent_of_child,
                         int num_parents) const {
  ad::Var msg = offset_lin.apply(tape, bind, offsets);
  if (feat_lin) {
    if (!feats) throw std::invalid_argument("point_conv expects features");
    msg = tape.mul(msg, feat_lin->apply(tape, bind, *feats));
  }
  ad::Var agg = tape.segment_mean(msg, parent_of_child, num_parents);
  return tape.silu(agg);
}

PointDeconv PointDeconv::create(ParamStore& store, const std::string& name,
                                int in_dim, int out_dim, Rng& rng) {
  PointDeconv d;
  d.offset_lin = Linear::create(store, name + ".off", 3, out_dim, rng);
  d.parent_lin = Linear::create(store, name + ".par", in_dim, out_dim, rng);
  return d;
}

ad::Var PointDeconv::apply(ad::Tape& tape, ParamBinder& bind,
                           ad::Var child_offsets, ad::Var parent_feats,
                           const std::vector<int>& parent_of_child) const {
  for (int p : parent_of_child)
    if (p < 0 || p >= tape.val(parent_feats).rows())
      throw std::invalid_argument("point_deconv: unmapped child");
  ad::Var from_parent = tape.gather_rows(
      parent_lin.apply(tape, bind, parent_feats), parent_of_child);
  ad::Var from_offset = offset_lin.apply(tape, bind, child_offsets);
  return tape.silu(tape.add(from_offset, from_parent));
}

EdgeList EdgeList::from_graph(const RadiusGraph& graph) {
  EdgeList e;
  e.src.reserve(graph.edges.size() * 2);
  e.dst.reserve(graph.edges.size() * 2);
  for (const auto& [u, v] : graph.edges) {
    e.src.push_back(u);
    e.dst.push_back(v);
    e.src.push_back(v);
    e.dst.push_back(u);
  }
  return e;
}

PointGnn PointGnn::create(ParamStore& store, const std::string& name,
                          int in_dim, int out_dim, int msg_dim, int hidden,
                          bool update_coords, Rng& rng) {
  PointGnn gnn;
  gnn.msg_pos = Linear::create(store, name + ".msg_pos", 3, msg_dim, rng);
  gnn.msg_src = Linear::create(store, name + ".msg_src", in_dim, msg_dim, rng);
  gnn.upd1 = Linear::create(store, name + ".upd1", in_dim + msg_dim, hidden, rng);
  gnn.upd2 = Linear::create(store, name + ".upd2", hidden,
                            out_dim + (update_coords ? 3 : 0), rng);
  gnn.out_dim = out_dim;
  gnn.update_coords = update_coords;
  return gnn;
}

PointGnn::Result PointGnn::apply(ad::Tape& tape, ParamBinder& bind,
                                 const EdgeList& edges, ad::Var positions,
                                 ad::Var feats) const {
  const int n = static_cast<int>(tape.val(feats).rows());

  // Self-edges keep isolated nodes on a pure self-update path.
  std::vector<int> src = edges.src, dst = edges.dst;
  src.reserve(src.size() + n);
  dst.reserve(dst.size() + n);
  for (int i = 0; i < n; ++i) {
    src.push_back(i);
    dst.push_back(i);
  }

  ad::Var src_pos = tape.gather_rows(positions, src);
  ad::Var dst_pos = tape.gather_rows(positions, dst);
  ad::Var dpos = tape.scalar_mul(tape.sub(src_pos, dst_pos), offset_scale);

  // The source-feature projection is per node, gathered per edge.
  ad::Var src_proj = msg_src.apply(tape, bind, feats);
  ad::Var msg = tape.silu(tape.add(msg_pos.apply(tape, bind, dpos),
                                   tape.gather_rows(src_proj, src)));
  ad::Var agg = tape.segment_max(msg, dst, n);

  ad::Var h = tape.silu(upd1.apply(tape, bind, tape.hstack(feats, agg)));
  ad::Var out = upd2.apply(tape, bind, h);

  Result res;
  if (update_coords) {
    ad::Var delta = tape.slice_cols(out, out_dim, 3);
    res.positions = tape.add(positions, delta);
    res.feats = out_dim > 0 ? tape.slice_cols(out, 0, out_dim) : ad::Var{};
  } else {
    res.positions = positions;
    res.feats = out;
  }
  return res;
}

ad::Var reparam_gaussian(ad::Tape& tape, ad::Var mu, ad::Var logvar,
                         const ad::Mat& noise) {
  ad::Var lv = tape.clamp(logvar, -8.0, 8.0);
  ad::Var std = tape.exp(tape.scalar_mul(lv, 0.5));
  return tape.add(mu, tape.mul(std, tape.constant(noise, "noise")));
}

ad::Var reparam_bernoulli(ad::Tape& tape, ad::Var logit,
                          const ad::Mat& logistic_noise, double temperature,
                          bool hard) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  ad::Var pre = tape.scalar_mul(
      tape.add(logit, tape.constant(logistic_noise, "logistic")),
      1.0 / temperature);
  ad::Var soft = tape.sigmoid(pre);
  if (!hard) return soft;
  ad::Mat hard_vals =
      (tape.val(soft).array() >= 0.5).cast<double>().matrix();
  return tape.straight_through(soft, std::move(hard_vals));
}

ad::Var kl_gaussian_rows(ad::Tape& tape, ad::Var mu, ad::Var logvar,
                         double prior_mean, double prior_std) {
  ad::Var lv = tape.clamp(logvar, -8.0, 8.0);
  const double s2 = prior_std * prior_std;
  ad::Var var = tape.exp(lv);
  ad::Var diff2 = tape.square(tape.scalar_add(mu, -prior_mean));
  ad::Var ratio = tape.scalar_mul(tape.add(var, diff2), 1.0 / s2);
  ad::Var core = tape.scalar_add(tape.sub(ratio, lv), -1.0 + std::log(s2));
  return tape.row_sum(tape.scalar_mul(core, 0.5));
}

ad::Var kl_gaussian_sum(ad::Tape& tape, ad::Var mu, ad::Var logvar,
                        double prior_mean, double prior_std) {
  return tape.sum_all(kl_gaussian_rows(tape, mu, logvar, prior_mean, prior_std));
}

ad::Var kl_bernoulli_sum(ad::Tape& tape, ad::Var q, double prior_p) {
  if (!(prior_p > 0.0) || !(prior_p < 1.0))
    throw std::invalid_argument("bernoulli prior must be inside (0, 1)");
  ad::Var qc = tape.clamp(q, 1e-12, 1.0 - 1e-12);
  ad::Var one_minus = tape.scalar_add(tape.neg(qc), 1.0);
  ad::Var t1 = tape.mul(qc, tape.scalar_add(tape.log(qc), -std::log(prior_p)));
  ad::Var t2 = tape.mul(
      one_minus,
      tape.scalar_add(tape.log(one_minus), -std::log(1.0 - prior_p)));
  return tape.sum_all(tape.add(t1, t2));
}

double reparam_gaussian_value(double mean, double logvar, double noise) {
  const double lv = std::min(8.0, std::max(-8.0, logvar));
  return mean + std::exp(0.5 * lv) * noise;
}

double reparam_bernoulli_value(const RelaxedBernoulliPosterior& post,
                               double uniform_noise, bool hard) {
  if (!(post.temperature > 0.0))
    throw std::invalid_argument("temperature must be > 0");
  const double u = std::min(std::max(uniform_noise, 1e-15), 1.0 - 1e-15);
  const double logistic = std::log(u) - std::log(1.0 - u);
  const double soft =
      1.0 / (1.0 + std::exp(-(post.logit + logistic) / post.temperature));
  return hard ? (soft >= 0.5 ? 1.0 : 0.0) : soft;
}

double kl_gaussian_value(const GaussianPosterior& post, double prior_mean,
                         double prior_std) {
  double kl = 0.0;
  const double s2 = prior_std * prior_std;
  for (int i = 0; i < post.mean.size(); ++i) {
    const double lv = std::min(8.0, std::max(-8.0, post.logvar(i)));
    const double var = std::exp(lv);
    const double diff = post.mean(i) - prior_mean;
    kl += 0.5 * ((var + diff * diff) / s2 - 1.0 - lv + std::log(s2));
  }
  return kl;
}

double kl_bernoulli_value(double q, double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw std::invalid_argument("bernoulli prior must be inside (0, 1)");
  const double qc = std::min(std::max(q, 1e-12), 1.0 - 1e-12);
  return qc * (std::log(qc) - std::log(p)) +
         (1.0 - qc) * (std::log(1.0 - qc) - std::log(1.0 - p));
}

}  // namespace glimix
