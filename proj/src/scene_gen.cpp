#include "glimix/scene_gen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace glimix {

namespace {

constexpr double kPi = 3.14159265358979323846;

TriMesh make_floor(double side) {
  TriMesh m;
  const double h = 0.5 * side;
  m.vertices.resize(4, 3);
  m.vertices << -h, -h, 0, h, -h, 0, h, h, 0, -h, h, 0;
  m.faces.resize(2, 3);
  m.faces << 0, 1, 2, 0, 2, 3;
  return m;
}

double horizontal_bound_radius(const TriMesh& mesh) {
  double r2 = 0.0;
  for (int i = 0; i < mesh.vertices.rows(); ++i) {
    const double x = mesh.vertices(i, 0), y = mesh.vertices(i, 1);
    r2 = std::max(r2, x * x + y * y);
  }
  return std::sqrt(r2);
}

struct Placement {
  std::vector<ObjectMeta> objects;
  bool ok = false;
};

Placement place_objects(const SceneGenConfig& cfg, int count, double separation,
                        Rng& rng) {
  Placement out;
  for (int k = 0; k < count; ++k) {
    ObjectMeta obj;
    obj.shape_id =
        cfg.shape_pool[rng.uniform_int(0, static_cast<int>(cfg.shape_pool.size()) - 1)];
    obj.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
    obj.yaw = rng.uniform(cfg.yaw_min, cfg.yaw_max);
    const TriMesh canonical = make_primitive(obj.shape_id);
    TriMesh posed = transform_mesh(canonical, obj.scale, obj.yaw, Vec3::Zero());
    obj.bound_radius = horizontal_bound_radius(posed);

    const double lim = 0.5 * cfg.floor_side - obj.bound_radius;
    if (lim <= 0.0) return out;
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const Vec3 pos(rng.uniform(-lim, lim), rng.uniform(-lim, lim), 0.0);
      bool clear = true;
      for (const ObjectMeta& other : out.objects) {
        const double d = (pos - other.position).head<2>().norm();
        if (d < obj.bound_radius + other.bound_radius + separation) {
          clear = false;
          break;
        }
      }
      if (clear) {
        obj.position = pos;
        out.objects.push_back(obj);
        placed = true;
      }
    }
    if (!placed) return out;
  }
  out.ok = true;
  return out;
}

std::vector<Vec3> make_viewpoints(const SceneGenConfig& cfg) {
  std::vector<Vec3> views;
  const double r = cfg.view_radius_factor * cfg.floor_side;
  const double z = r * std::tan(cfg.view_elevation_deg * kPi / 180.0);
  for (int v = 0; v < cfg.num_viewpoints; ++v) {
    const double th = 2.0 * kPi * v / cfg.num_viewpoints;
    views.emplace_back(r * std::cos(th), r * std::sin(th), z);
  }
  return views;
}

}  // namespace

void SceneGenConfig::validate() const {
  if (object_count_min < 1 || object_count_max < object_count_min)
    throw std::invalid_argument("invalid object count range");
  if (!(points_per_unit_area > 0.0))
    throw std::invalid_argument("points_per_unit_area must be > 0");
  if (!(scale_max >= scale_min) || !(scale_min > 0.0))
    throw std::invalid_argument("invalid scale range");
  if (!(floor_side > 0.0)) throw std::invalid_argument("floor_side must be > 0");
  if (shape_pool.empty()) throw std::invalid_argument("empty shape pool");
}

std::vector<TriMesh> scene_meshes(const SceneGenConfig& cfg,
                                  const SceneSample& sample) {
  std::vector<TriMesh> meshes;
  meshes.push_back(make_floor(cfg.floor_side));
  for (const ObjectMeta& obj : sample.objects) {
    meshes.push_back(transform_mesh(make_primitive(obj.shape_id), obj.scale,
                                    obj.yaw, obj.position));
  }
  return meshes;
}

SceneSample generate_scene(const SceneGenConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);

  // the object count is part of the scene identity: drawn once, never
  // re-rolled by placement retries (keeps the count distribution uniform)
  const int count = rng.uniform_int(cfg.object_count_min, cfg.object_count_max);
  const bool near_touching = count >= 2 && cfg.touch_fraction > 0.0 &&
                             rng.uniform() < cfg.touch_fraction;

  for (int attempt = 0; attempt < 20; ++attempt) {
    double separation = cfg.min_separation;
    if (near_touching) separation = rng.uniform(0.0, 0.05);
    Placement placement = place_objects(cfg, count, separation, rng);
    if (!placement.ok) continue;

    SceneSample sample;
    sample.seed = seed;
    sample.object_count = count;
    sample.objects = placement.objects;

    const std::vector<TriMesh> meshes = scene_meshes(cfg, sample);
    std::vector<MatX3> pts(meshes.size());
    std::vector<int> labels_per_mesh(meshes.size());
    for (std::size_t m = 0; m < meshes.size(); ++m) {
      pts[m] = sample_surface(meshes[m], cfg.points_per_unit_area, rng);
      labels_per_mesh[m] = static_cast<int>(m);  // floor is 0
    }

    const std::vector<Vec3> views = make_viewpoints(cfg);
    int total = 0;
    std::vector<std::vector<bool>> vis(meshes.size());
    for (std::size_t m = 0; m < meshes.size(); ++m) {
      vis[m] = visible_from_any(pts[m], meshes, views);
      total += static_cast<int>(std::count(vis[m].begin(), vis[m].end(), true));
    }

    bool all_nonempty = total > 0;
    for (std::size_t m = 1; m < meshes.size(); ++m) {
      if (std::count(vis[m].begin(), vis[m].end(), true) == 0)
        all_nonempty = false;
    }
    if (!all_nonempty) continue;

    sample.cloud.positions.resize(total, 3);
    std::vector<int> labels(total);
    int row = 0;
    for (std::size_t m = 0; m < meshes.size(); ++m) {
      for (int i = 0; i < pts[m].rows(); ++i) {
        if (!vis[m][i]) continue;
        sample.cloud.positions.row(row) = pts[m].row(i);
        labels[row] = labels_per_mesh[m];
        ++row;
      }
    }
    sample.cloud.labels = std::move(labels);
    return sample;
  }
  throw std::runtime_error("placement infeasible");
}

namespace {

std::string scene_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%06d", index);
  return buf;
}

}  // namespace

void save_dataset(const std::vector<SceneSample>& samples,
                  const std::string& directory) {
  fs::create_directories(directory);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const SceneSample& sample = samples[s];
    const fs::path dir = fs::path(directory) / scene_dir_name(static_cast<int>(s));
    fs::create_directories(dir);

    std::ofstream csv(dir / "points.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "points.csv").string());
    char line[160];
    const auto& labels = *sample.cloud.labels;
    for (int i = 0; i < sample.cloud.size(); ++i) {
      std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%d\n",
                    sample.cloud.positions(i, 0), sample.cloud.positions(i, 1),
                    sample.cloud.positions(i, 2), labels[i]);
      csv << line;
    }

    json meta;
    meta["seed"] = sample.seed;
    meta["object_count"] = sample.object_count;
    meta["objects"] = json::array();
    for (const ObjectMeta& obj : sample.objects) {
      meta["objects"].push_back({{"shape", obj.shape_id},
                                 {"scale", obj.scale},
                                 {"yaw", obj.yaw},
                                 {"position", {obj.position.x(), obj.position.y(),
                                               obj.position.z()}},
                                 {"bound_radius", obj.bound_radius}});
    }
    std::ofstream mf(dir / "meta.json");
    mf << meta.dump(2) << "\n";
  }
}

std::vector<SceneSample> load_dataset(const std::string& directory) {
  if (!fs::exists(directory))
    throw std::runtime_error("dataset directory not found: " + directory);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_directory() && fs::exists(entry.path() / "points.csv"))
      dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) {
    std::cerr << "warning: no scenes found in " << directory << "\n";
    return {};
  }

  std::vector<SceneSample> samples;
  for (const fs::path& dir : dirs) {
    const fs::path csv_path = dir / "points.csv";
    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot read " + csv_path.string());

    std::vector<Vec3> pos;
    std::vector<int> labels;
    std::string line;
    int line_no = 0;
    while (std::getline(csv, line)) {
      ++line_no;
      if (line.empty()) continue;
      double x, y, z;
      int label;
      char extra;
      const int got =
          std::sscanf(line.c_str(), "%lf,%lf,%lf,%d%c", &x, &y, &z, &label, &extra);
      if (got != 4) {
        throw std::runtime_error("malformed row in " + csv_path.string() +
                                 " at line " + std::to_string(line_no));
      }
      pos.emplace_back(x, y, z);
      labels.push_back(label);
    }
    if (pos.empty())
      throw std::runtime_error("empty scene file " + csv_path.string());

    SceneSample sample;
    sample.cloud.positions.resize(static_cast<int>(pos.size()), 3);
    for (std::size_t i = 0; i < pos.size(); ++i)
      sample.cloud.positions.row(static_cast<int>(i)) = pos[i];
    sample.cloud.labels = labels;
    sample.object_count =
        *std::max_element(labels.begin(), labels.end());

    const fs::path meta_path = dir / "meta.json";
    if (fs::exists(meta_path)) {
      std::ifstream mf(meta_path);
      json meta = json::parse(mf, nullptr, true, true);
      sample.seed = meta.value("seed", 0ull);
      sample.object_count = meta.value("object_count", sample.object_count);
      if (meta.contains("objects")) {
        for (const auto& jo : meta["objects"]) {
          ObjectMeta obj;
          obj.shape_id = jo.value("shape", "");
          obj.scale = jo.value("scale", 0.0);
          obj.yaw = jo.value("yaw", 0.0);
          if (jo.contains("position")) {
            obj.position = Vec3(jo["position"][0], jo["position"][1],
                                jo["position"][2]);
          }
          obj.bound_radius = jo.value("bound_radius", 0.0);
          sample.objects.push_back(obj);
        }
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace glimix
