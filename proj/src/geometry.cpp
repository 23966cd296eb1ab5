#include "glimix/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace glimix {

namespace {

struct IndexHash {
  std::size_t operator()(const Vec3i& v) const {
    // 3D integer mix, good enough for grid buckets
    std::uint64_t h = 1469598103934665603ull;
    for (int k = 0; k < 3; ++k) {
      h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v[k]));
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

struct IndexEq {
  bool operator()(const Vec3i& a, const Vec3i& b) const { return a == b; }
};

inline Vec3i grid_index(const Vec3& p, const Vec3& origin, double step) {
  Vec3i idx;
  for (int k = 0; k < 3; ++k) {
    idx[k] = static_cast<int>(std::floor((p[k] - origin[k]) / step));
  }
  return idx;
}

inline bool lex_less(const Vec3i& a, const Vec3i& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  if (a[1] != b[1]) return a[1] < b[1];
  return a[2] < b[2];
}

}  // namespace

void PointCloud::validate() const {
  if (positions.rows() == 0) throw std::invalid_argument("empty input");
  if (!positions.allFinite())
    throw std::invalid_argument("non-finite coordinates");
  if (labels && static_cast<int>(labels->size()) != size())
    throw std::invalid_argument("label count does not match point count");
  if (features && features->rows() != positions.rows())
    throw std::invalid_argument("feature count does not match point count");
}

VoxelGrid voxelize(const PointCloud& cloud, double cell_size,
                   const Vec3& origin) {
  if (cloud.size() == 0) throw std::invalid_argument("empty input");
  if (!(cell_size > 0.0)) throw std::invalid_argument("cell_size must be > 0");

  std::unordered_map<Vec3i, std::vector<int>, IndexHash, IndexEq> buckets;
  for (int i = 0; i < cloud.size(); ++i) {
    buckets[grid_index(cloud.positions.row(i), origin, cell_size)].push_back(i);
  }

  VoxelGrid grid;
  grid.cell_size = cell_size;
  grid.origin = origin;
  grid.cells.reserve(buckets.size());
  for (auto& [idx, pts] : buckets) {
    VoxelCell cell;
    cell.index = idx;
    cell.points = std::move(pts);
    cell.center =
        origin + (idx.cast<double>() + Vec3::Constant(0.5)) * cell_size;
    grid.cells.push_back(std::move(cell));
  }
  std::sort(grid.cells.begin(), grid.cells.end(),
            [](const VoxelCell& a, const VoxelCell& b) {
              return lex_less(a.index, b.index);
            });
  return grid;
}

RadiusGraph build_radius_graph(const MatX3& positions, double radius,
                               int max_neighbors) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be > 0");
  if (max_neighbors < 1)
    throw std::invalid_argument("max_neighbors must be >= 1");

  const int n = static_cast<int>(positions.rows());
  RadiusGraph graph;
  graph.num_nodes = n;
  graph.radius = radius;
  graph.max_neighbors = max_neighbors;
  if (n < 2) return graph;

  // Hash grid with cell size = radius so candidates live in the 27-cell
  // neighborhood.
  std::unordered_map<Vec3i, std::vector<int>, IndexHash, IndexEq> grid;
  const Vec3 origin = positions.colwise().minCoeff().transpose();
  for (int i = 0; i < n; ++i) {
    grid[grid_index(positions.row(i), origin, radius)].push_back(i);
  }

  const double r2 = radius * radius;
  std::vector<std::pair<double, int>> cand;
  std::vector<std::pair<int, int>> directed;
  for (int i = 0; i < n; ++i) {
    cand.clear();
    const Vec3 pi = positions.row(i);
    const Vec3i ci = grid_index(pi, origin, radius);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(Vec3i(ci[0] + dx, ci[1] + dy, ci[2] + dz));
          if (it == grid.end()) continue;
          for (int j : it->second) {
            if (j == i) continue;
            const double d2 = (pi - Vec3(positions.row(j))).squaredNorm();
            if (d2 <= r2) cand.emplace_back(d2, j);
          }
        }
    std::sort(cand.begin(), cand.end());  // distance, then ascending index
    const int keep = std::min<int>(max_neighbors, static_cast<int>(cand.size()));
    for (int k = 0; k < keep; ++k) {
      const int j = cand[k].second;
      directed.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(directed.begin(), directed.end());
  directed.erase(std::unique(directed.begin(), directed.end()),
                 directed.end());
  graph.edges = std::move(directed);
  return graph;
}

std::vector<std::vector<int>> adjacency(const RadiusGraph& graph) {
  std::vector<std::vector<int>> adj(graph.num_nodes);
  for (const auto& [u, v] : graph.edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& lst : adj) std::sort(lst.begin(), lst.end());
  return adj;
}

VoxelPyramid build_voxel_pyramid(const MatX3& points, int depth,
                                 int base_subdiv, const Vec3& anchor_origin,
                                 double anchor_extent) {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (points.rows() == 0) throw std::invalid_argument("empty point set");
  if (base_subdiv < 1) throw std::invalid_argument("base_subdiv must be >= 1");
  if (!(anchor_extent > 0.0))
    throw std::invalid_argument("anchor extent must be > 0");

  VoxelPyramid pyramid;
  MatX3 current = points;
  for (int level = 0; level < depth; ++level) {
    const int subdiv = std::max(base_subdiv >> level, 1);
    const double step = anchor_extent / subdiv;
    const int n_children = static_cast<int>(current.rows());

    std::unordered_map<Vec3i, std::vector<int>, IndexHash, IndexEq> buckets;
    for (int c = 0; c < n_children; ++c) {
      Vec3i idx = grid_index(current.row(c), anchor_origin, step);
      // Points sitting exactly on the far anchor face stay in the last voxel.
      for (int k = 0; k < 3; ++k) idx[k] = std::clamp(idx[k], 0, subdiv - 1);
      buckets[idx].push_back(c);
    }
    std::vector<Vec3i> keys;
    keys.reserve(buckets.size());
    for (const auto& [idx, members] : buckets) keys.push_back(idx);
    std::sort(keys.begin(), keys.end(), lex_less);

    PyramidLevel out;
    out.positions.resize(static_cast<int>(keys.size()), 3);
    out.child_parent.assign(n_children, -1);
    for (int p = 0; p < static_cast<int>(keys.size()); ++p) {
      const auto& members = buckets[keys[p]];
      Vec3 com = Vec3::Zero();
      for (int c : members) {
        com += Vec3(current.row(c));
        out.child_parent[c] = p;
      }
      out.positions.row(p) = com / static_cast<double>(members.size());
    }
    current = out.positions;
    pyramid.levels.push_back(std::move(out));
  }
  return pyramid;
}

VoxelPyramid build_voxel_pyramid(const MatX3& points, int depth,
                                 int base_subdiv) {
  if (points.rows() == 0) throw std::invalid_argument("empty point set");
  const Vec3 lo = points.colwise().minCoeff().transpose();
  const Vec3 hi = points.colwise().maxCoeff().transpose();
  const Vec3 mid = 0.5 * (lo + hi);
  double extent = (hi - lo).maxCoeff();
  extent = (extent > 0.0 ? extent : 1.0) * (1.0 + 1e-9);
  const Vec3 origin = mid - Vec3::Constant(0.5 * extent);
  return build_voxel_pyramid(points, depth, base_subdiv, origin, extent);
}

std::vector<int> crop_glimpse(const PointCloud& cloud, const BoundingBox& box) {
  if (!(box.apothem.minCoeff() > 0.0))
    throw std::invalid_argument("box apothem must be positive");
  std::vector<int> members;
  for (int i = 0; i < cloud.size(); ++i) {
    if (box.contains(cloud.positions.row(i))) members.push_back(i);
  }
  return members;
}

}  // namespace glimix
