#include "glimix/chamfer_graph.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace glimix {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

ChamferGraph build_chamfer_graph(ad::Tape& tape, const ChamferGraphInput& in) {
  const int n_pts = static_cast<int>(in.points->rows());
  const int n_glimpses = static_cast<int>(in.members.size());
  const double sigma = in.params.sigma_c;
  const double lc = -1.5 * std::log(kTwoPi * sigma * sigma);
  const double scale = -1.0 / (2.0 * sigma * sigma);

  ad::Var points_const = tape.constant(*in.points, "points");

  // mixing weights: w = z * pi * b per entry, summed per point
  std::vector<ad::Var> w(n_glimpses);
  std::vector<int> flat_ids;
  std::vector<ad::Var> flat_w_parts;
  for (int i = 0; i < n_glimpses; ++i) {
    const auto& mem = in.members[i];
    std::vector<int> glimpse_row(mem.size(), i);
    ad::Var z_i = tape.gather_rows(in.z_pres, glimpse_row);
    w[i] = tape.mul(z_i, tape.mul(in.pi[i], in.boundary[i]));
    flat_w_parts.push_back(w[i]);
    flat_ids.insert(flat_ids.end(), mem.begin(), mem.end());
  }

  ChamferGraph out;
  ad::Var wsum;  // N x 1
  if (!flat_w_parts.empty()) {
    ad::Var flat_w = tape.vstack(flat_w_parts);
    wsum = tape.segment_sum(flat_w, flat_ids, n_pts);
  } else {
    wsum = tape.constant(ad::Mat::Zero(n_pts, 1), "wsum");
  }

  std::vector<ad::Var> alpha_parts;
  for (int i = 0; i < n_glimpses; ++i) {
    ad::Var s_at = tape.gather_rows(wsum, in.members[i]);
    out.alpha.push_back(tape.div_safe(tape.square(w[i]), s_at));
    alpha_parts.push_back(out.alpha[i]);
  }
  ad::Var ones = tape.constant(ad::Mat::Ones(n_pts, 1), "ones");
  if (!alpha_parts.empty()) {
    out.alpha0 = tape.sub(
        ones, tape.segment_sum(tape.vstack(alpha_parts), flat_ids, n_pts));
  } else {
    out.alpha0 = ones;
  }

  // forward: per-entry glimpse terms + per-point scene terms
  std::vector<ad::Var> term_alpha{};
  std::vector<ad::Var> term_ld{};
  std::vector<int> term_ids;
  for (int i = 0; i < n_glimpses; ++i) {
    if (tape.val(in.glimpse_preds[i]).rows() == 0) continue;  // zero mass
    ad::Var member_pts = tape.gather_rows(points_const, in.members[i]);
    ad::Var sq = tape.min_sq_dist_rows(member_pts, in.glimpse_preds[i]);
    ad::Var ld = tape.scalar_add(tape.scalar_mul(sq, scale), lc);
    if (in.params.normalizer_mode == ChamferParams::Normalizer::kDivideByN)
      ld = tape.scalar_add(
          ld, -std::log(static_cast<double>(tape.val(in.glimpse_preds[i]).rows())));
    term_alpha.push_back(out.alpha[i]);
    term_ld.push_back(ld);
    term_ids.insert(term_ids.end(), in.members[i].begin(), in.members[i].end());
  }
  if (tape.val(in.scene_pred).rows() > 0) {
    ad::Var sq = tape.min_sq_dist_rows(points_const, in.scene_pred);
    ad::Var ld = tape.scalar_add(tape.scalar_mul(sq, scale), lc);
    if (in.params.normalizer_mode == ChamferParams::Normalizer::kDivideByN)
      ld = tape.scalar_add(
          ld, -std::log(static_cast<double>(tape.val(in.scene_pred).rows())));
    term_alpha.push_back(out.alpha0);
    term_ld.push_back(ld);
    for (int x = 0; x < n_pts; ++x) term_ids.push_back(x);
  }
  if (term_ld.empty()) throw std::runtime_error("point uncovered");

  ad::Var all_ld = tape.vstack(term_ld);
  ad::Var all_alpha = tape.vstack(term_alpha);

  // per-point max of the log densities, detached, for a stable log-sum
  ad::Mat cmax = ad::Mat::Constant(n_pts, 1,
                                   -std::numeric_limits<double>::infinity());
  const ad::Mat& ldv = tape.val(all_ld);
  for (std::size_t r = 0; r < term_ids.size(); ++r)
    cmax(term_ids[r], 0) = std::max(cmax(term_ids[r], 0),
                                    ldv(static_cast<Eigen::Index>(r), 0));
  for (int x = 0; x < n_pts; ++x)
    if (!std::isfinite(cmax(x, 0))) throw std::runtime_error("point uncovered");
  ad::Var c_const = tape.constant(cmax, "lse_shift");

  ad::Var shifted = tape.exp(tape.sub(all_ld, tape.gather_rows(c_const, term_ids)));
  ad::Var mass = tape.segment_sum(tape.mul(all_alpha, shifted), term_ids, n_pts);
  if (tape.val(mass).minCoeff() <= 0.0)
    throw std::runtime_error("point uncovered");
  out.forward_ll = tape.sum_all(tape.add(tape.log(mass), c_const));

  // backward: predictions matched to their glimpse's input points
  std::vector<ad::Var> bwd_terms;
  for (int i = 0; i < n_glimpses; ++i) {
    if (tape.val(in.glimpse_preds[i]).rows() == 0) continue;
    if (in.members[i].empty())
      throw std::runtime_error(
          "predicted point in a glimpse with zero input points");
    ad::Var member_pts = tape.gather_rows(points_const, in.members[i]);
    std::vector<int> matched;
    ad::Var sq = tape.min_sq_dist_rows(in.glimpse_preds[i], member_pts, &matched);
    ad::Var ld = tape.scalar_add(tape.scalar_mul(sq, scale), lc);
    ad::Var weight = tape.gather_rows(out.alpha[i], matched);
    bwd_terms.push_back(tape.sum_all(tape.mul(weight, ld)));
  }
  if (tape.val(in.scene_pred).rows() > 0) {
    std::vector<int> matched;
    ad::Var sq = tape.min_sq_dist_rows(in.scene_pred, points_const, &matched);
    ad::Var ld = tape.scalar_add(tape.scalar_mul(sq, scale), lc);
    ad::Var weight = tape.gather_rows(out.alpha0, matched);
    bwd_terms.push_back(tape.sum_all(tape.mul(weight, ld)));
  }
  if (bwd_terms.empty()) {
    out.backward_ll = tape.constant(ad::Mat::Zero(1, 1), "bwd_zero");
  } else {
    ad::Var acc = bwd_terms[0];
    for (std::size_t t = 1; t < bwd_terms.size(); ++t)
      acc = tape.add(acc, bwd_terms[t]);
    out.backward_ll = acc;
  }

  out.total = tape.add(out.forward_ll, out.backward_ll);
  return out;
}

}  // namespace glimix
