#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glimix/geometry.hpp"
#include "glimix/mesh.hpp"

namespace glimix {

struct SceneGenConfig {
  double floor_side = 4.0;
  int object_count_min = 2;
  int object_count_max = 5;
  std::vector<std::string> shape_pool = primitive_ids();
  double scale_min = 0.3;
  double scale_max = 0.7;
  double yaw_min = 0.0;
  double yaw_max = 6.283185307179586;
  double points_per_unit_area = 75.0;
  double min_separation = 0.0;   // gap between bounding circles; <= 0 allows touching
  double touch_fraction = 0.25;  // fraction of multi-object scenes regenerated
                                 // with a near-zero separation
  int num_viewpoints = 10;
  double view_radius_factor = 1.5;  // times floor_side
  double view_elevation_deg = 30.0;
  int max_retries = 1000;

  void validate() const;
};

struct ObjectMeta {
  std::string shape_id;
  double scale = 0.0;
  double yaw = 0.0;
  Vec3 position = Vec3::Zero();  // resting point on the floor
  double bound_radius = 0.0;     // horizontal bounding-circle radius
};

struct SceneSample {
  PointCloud cloud;  // labels: 0 floor, 1..K objects
  int object_count = 0;
  std::vector<ObjectMeta> objects;
  std::uint64_t seed = 0;
};

/// Procedural floor + objects scene: rejection-sampled non-interpenetrating
/// placement, area-uniform surface sampling, and removal of points occluded
/// from all surrounding viewpoints. Deterministic given (cfg, seed).
SceneSample generate_scene(const SceneGenConfig& cfg, std::uint64_t seed);

/// World-space meshes of a generated scene (floor first), for checks.
std::vector<TriMesh> scene_meshes(const SceneGenConfig& cfg,
                                  const SceneSample& sample);

void save_dataset(const std::vector<SceneSample>& samples,
                  const std::string& directory);
std::vector<SceneSample> load_dataset(const std::string& directory);

}  // namespace glimix
