#pragma once

#include <Eigen/Dense>
#include <optional>
#include <utility>
#include <vector>

namespace glimix {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// One scene worth of points. Label 0 is reserved for layout/background.
struct PointCloud {
  MatX3 positions;
  std::optional<Eigen::MatrixXd> features;
  std::optional<std::vector<int>> labels;

  int size() const { return static_cast<int>(positions.rows()); }

  /// Throws std::invalid_argument on N == 0, non-finite coordinates or a
  /// label array whose length does not match N.
  void validate() const;
};

struct BoundingBox {
  Vec3 center;
  Vec3 apothem;  // positive half-extent per axis

  bool contains(const Vec3& p) const {
    return ((p - center).cwiseAbs().array() <= apothem.array()).all();
  }
};

struct VoxelCell {
  Vec3i index;
  std::vector<int> points;  // member point indices, ascending
  Vec3 center;
};

struct VoxelGrid {
  double cell_size = 0.0;
  Vec3 origin = Vec3::Zero();
  std::vector<VoxelCell> cells;  // sorted lexicographically by index
};

/// One level of a center-of-mass voxel pyramid. `child_parent[c]` maps child c
/// (a raw point at level 0, a level k-1 aggregation point above) to its parent
/// aggregation point row.
struct PyramidLevel {
  MatX3 positions;
  std::vector<int> child_parent;
};

struct VoxelPyramid {
  std::vector<PyramidLevel> levels;  // finest to coarsest
};

struct RadiusGraph {
  int num_nodes = 0;
  double radius = 0.0;
  int max_neighbors = 0;
  std::vector<std::pair<int, int>> edges;  // undirected, u < v, sorted
};

/// Partition a cloud over a uniform grid. Half-open intervals per axis: a
/// point on a face belongs to the cell of the lower index. Only non-empty
/// cells are kept, sorted lexicographically by integer index.
VoxelGrid voxelize(const PointCloud& cloud, double cell_size,
                   const Vec3& origin = Vec3::Zero());

/// Connect all pairs within `radius`, keep the `max_neighbors` nearest per
/// node (ties by ascending index), then symmetrize. Isolated nodes are fine.
RadiusGraph build_radius_graph(const MatX3& positions, double radius,
                               int max_neighbors = 16);

/// Adjacency lists of the symmetrized edge set, each sorted ascending.
std::vector<std::vector<int>> adjacency(const RadiusGraph& graph);

/// Center-of-mass aggregation pyramid anchored to the cube
/// [anchor_origin, anchor_origin + extent]^3. Level k subdivides the cube
/// into max(base_subdiv >> k, 1)^3 sub-voxels; aggregation points sit at the
/// unweighted mean of their children.
VoxelPyramid build_voxel_pyramid(const MatX3& points, int depth,
                                 int base_subdiv, const Vec3& anchor_origin,
                                 double anchor_extent);

/// AABB-anchored variant: the anchor cube is the padded bounding cube of the
/// points.
VoxelPyramid build_voxel_pyramid(const MatX3& points, int depth,
                                 int base_subdiv);

/// Indices of points with |x_k - c_k| <= a_k on every axis (closed test, so a
/// point on a face is a member; points may belong to several glimpses).
std::vector<int> crop_glimpse(const PointCloud& cloud, const BoundingBox& box);

}  // namespace glimix
