#pragma once

#include <vector>

#include "glimix/autodiff.hpp"
#include "glimix/chamfer.hpp"
#include "glimix/geometry.hpp"

namespace glimix {

/// Differentiable Chamfer Likelihood assembly. Inputs mirror the plain
/// evaluator; pi/boundary are per-glimpse column vectors over the glimpse's
/// member list, z_pres is one column over glimpses.
struct ChamferGraphInput {
  const MatX3* points = nullptr;              // N x 3
  std::vector<std::vector<int>> members;      // per object glimpse
  std::vector<ad::Var> glimpse_preds;         // per object glimpse, m_i x 3
  ad::Var scene_pred;                         // scene glimpse prediction
  std::vector<ad::Var> pi;                    // members_i x 1
  std::vector<ad::Var> boundary;              // members_i x 1
  ad::Var z_pres;                             // G x 1
  ChamferParams params;
};

struct ChamferGraph {
  ad::Var forward_ll;
  ad::Var backward_ll;
  ad::Var total;
  std::vector<ad::Var> alpha;  // per glimpse, members_i x 1
  ad::Var alpha0;              // N x 1
};

ChamferGraph build_chamfer_graph(ad::Tape& tape,
                                 const ChamferGraphInput& input);

}  // namespace glimix
