#pragma once

#include <string>
#include <vector>

#include "glimix/geometry.hpp"
#include "glimix/rng.hpp"

namespace glimix {

struct TriMesh {
  MatX3 vertices;
  Eigen::Matrix<int, Eigen::Dynamic, 3> faces;

  double surface_area() const;
  void aabb(Vec3& lo, Vec3& hi) const;
};

/// Canonical primitives rest on z = 0 with unit nominal extent; `scale`
/// multiplies all dimensions and `yaw` rotates about z before translation.
TriMesh make_primitive(const std::string& shape_id);
const std::vector<std::string>& primitive_ids();

TriMesh transform_mesh(const TriMesh& mesh, double scale, double yaw,
                       const Vec3& translation);

/// Area-uniform surface samples; count = round(area * points_per_unit_area).
MatX3 sample_surface(const TriMesh& mesh, double points_per_unit_area,
                     Rng& rng);

/// Squared distance from a point to the closest triangle of the mesh.
double squared_distance_to_mesh(const Vec3& p, const TriMesh& mesh);

/// Visibility of points against a set of blocker meshes: a point is visible
/// from a viewpoint when no triangle intersects the open segment between
/// them. Returns one flag per point, true when visible from >= 1 viewpoint.
std::vector<bool> visible_from_any(const MatX3& points,
                                   const std::vector<TriMesh>& blockers,
                                   const std::vector<Vec3>& viewpoints);

}  // namespace glimix
