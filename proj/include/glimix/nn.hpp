#pragma once

#include <deque>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "glimix/autodiff.hpp"
#include "glimix/geometry.hpp"
#include "glimix/rng.hpp"

namespace glimix {

/// Diagonal Gaussian posterior parameters (log-variance clamped to [-8, 8]
/// wherever it is consumed).
struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd logvar;
};

struct RelaxedBernoulliPosterior {
  double logit = 0.0;
  double temperature = 1.0;
};

/// Ordered, named parameter registry. Deterministic registration order gives
/// deterministic initialization and a stable checkpoint layout.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ad::Mat value;
    ad::Mat grad;
    ad::Mat adam_m;
    ad::Mat adam_v;
  };

  Entry* add(const std::string& name, int rows, int cols, double init_std,
             Rng& rng);
  Entry* find(const std::string& name);
  const std::deque<Entry>& entries() const { return entries_; }
  std::deque<Entry>& entries() { return entries_; }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::deque<Entry> entries_;  // deque keeps pointers stable
  std::unordered_map<std::string, Entry*> by_name_;
};

/// Binds ParamStore entries to leaves of one tape and pulls gradients back
/// after backward().
class ParamBinder {
 public:
  explicit ParamBinder(ad::Tape& tape) : tape_(&tape) {}
  ad::Var operator()(ParamStore::Entry* e);
  void accumulate_grads(double scale = 1.0);

 private:
  ad::Tape* tape_;
  std::unordered_map<ParamStore::Entry*, ad::Var> cache_;
  std::vector<std::pair<ParamStore::Entry*, ad::Var>> used_;
};

struct Linear {
  ParamStore::Entry* w = nullptr;  // in x out
  ParamStore::Entry* b = nullptr;  // 1 x out

  static Linear create(ParamStore& store, const std::string& name, int in,
                       int out, Rng& rng);
  ad::Var apply(ad::Tape& tape, ParamBinder& bind, ad::Var x) const;
  int out_dim() const { return static_cast<int>(w->value.cols()); }
};

/// Aggregation operator: per-child message linear in the child-parent offset
/// (elementwise-scaling learned per channel from the child feature), averaged
/// over the children of each parent, then a smooth nonlinearity.
struct PointConv {
  Linear offset_lin;                // 3 -> out
  std::optional<Linear> feat_lin;   // in -> out (absent for raw points)

  static PointConv create(ParamStore& store, const std::string& name,
                          int in_dim, int out_dim, Rng& rng);
  /// offsets: E x 3 (child minus parent); feats: E x in (ignored when the
  /// block was built feature-less); parent_of_child in [0, num_parents).
  ad::Var apply(ad::Tape& tape, ParamBinder& bind, ad::Var offsets,
                std::optional<ad::Var> feats,
                const std::vector<int>& parent_of_child,
                int num_parents) const;
};

/// Inverse of PointConv: child feature from its parent's feature plus the
/// relative offset.
struct PointDeconv {
  Linear offset_lin;  // 3 -> out
  Linear parent_lin;  // in -> out

  static PointDeconv create(ParamStore& store, const std::string& name,
                            int in_dim, int out_dim, Rng& rng);
  ad::Var apply(ad::Tape& tape, ParamBinder& bind, ad::Var child_offsets,
                ad::Var parent_feats,
                const std::vector<int>& parent_of_child) const;
};

struct EdgeList {
  std::vector<int> src;
  std::vector<int> dst;

  static EdgeList from_graph(const RadiusGraph& graph);  // both directions
};

/// One round of message passing: per-edge message from the relative offset
/// and the source feature, max-aggregated per node (a self-message keeps
/// isolated nodes updated), then a two-layer node update. With update_coords
/// the last 3 output channels displace node positions.
struct PointGnn {
  Linear msg_pos;  // 3 -> msg_dim
  Linear msg_src;  // in -> msg_dim
  Linear upd1;     // in + msg_dim -> hidden
  Linear upd2;     // hidden -> out (+3 when update_coords)
  int out_dim = 0;
  bool update_coords = false;
  double offset_scale = 1.0;

  static PointGnn create(ParamStore& store, const std::string& name,
                         int in_dim, int out_dim, int msg_dim, int hidden,
                         bool update_coords, Rng& rng);

  struct Result {
    ad::Var feats;      // N x out_dim (empty when out_dim == 0)
    ad::Var positions;  // N x 3 (input positions unless update_coords)
  };
  Result apply(ad::Tape& tape, ParamBinder& bind, const EdgeList& edges,
               ad::Var positions, ad::Var feats) const;
};

// --- reparameterized sampling and KL terms ---

ad::Var reparam_gaussian(ad::Tape& tape, ad::Var mu, ad::Var logvar,
                         const ad::Mat& noise);

/// Relaxed Bernoulli sample from logistic noise; hard=true thresholds at 0.5
/// with a straight-through gradient.
ad::Var reparam_bernoulli(ad::Tape& tape, ad::Var logit,
                          const ad::Mat& logistic_noise, double temperature,
                          bool hard);

/// Sum over all elements of KL(N(mu, e^logvar) || N(prior_mean, prior_std^2)).
ad::Var kl_gaussian_sum(ad::Tape& tape, ad::Var mu, ad::Var logvar,
                        double prior_mean, double prior_std);

/// Per-row KL sums (N x 1), for per-glimpse weighting.
ad::Var kl_gaussian_rows(ad::Tape& tape, ad::Var mu, ad::Var logvar,
                         double prior_mean, double prior_std);

/// Sum over rows of KL(Bernoulli(q) || Bernoulli(p)) on mean probabilities.
ad::Var kl_bernoulli_sum(ad::Tape& tape, ad::Var q, double prior_p);

// plain-value counterparts
double reparam_gaussian_value(double mean, double logvar, double noise);
double reparam_bernoulli_value(const RelaxedBernoulliPosterior& post,
                               double uniform_noise, bool hard);
double kl_gaussian_value(const GaussianPosterior& post, double prior_mean,
                         double prior_std);
double kl_bernoulli_value(double q, double p);

}  // namespace glimix
