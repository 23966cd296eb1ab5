#include "glimix/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace glimix {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Builder {
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> faces;

  int add(const Vec3& v) {
    verts.push_back(v);
    return static_cast<int>(verts.size()) - 1;
  }
  void tri(int a, int b, int c) { faces.emplace_back(a, b, c); }
  void quad(int a, int b, int c, int d) {
    tri(a, b, c);
    tri(a, c, d);
  }

  TriMesh done() const {
    TriMesh m;
    m.vertices.resize(static_cast<int>(verts.size()), 3);
    for (int i = 0; i < static_cast<int>(verts.size()); ++i)
      m.vertices.row(i) = verts[i];
    m.faces.resize(static_cast<int>(faces.size()), 3);
    for (int i = 0; i < static_cast<int>(faces.size()); ++i)
      m.faces.row(i) = faces[i];
    return m;
  }
};

TriMesh make_box(double hx, double hy, double z0, double z1) {
  Builder b;
  int v[8];
  int c = 0;
  for (double z : {z0, z1})
    for (auto [x, y] : {std::pair{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}})
      v[c++] = b.add(Vec3(x, y, z));
  b.quad(v[0], v[3], v[2], v[1]);  // bottom
  b.quad(v[4], v[5], v[6], v[7]);  // top
  b.quad(v[0], v[1], v[5], v[4]);
  b.quad(v[1], v[2], v[6], v[5]);
  b.quad(v[2], v[3], v[7], v[6]);
  b.quad(v[3], v[0], v[4], v[7]);
  return b.done();
}

TriMesh make_sphere(double radius, double center_z, int segments, int rings) {
  Builder b;
  const int top = b.add(Vec3(0, 0, center_z + radius));
  const int bot = b.add(Vec3(0, 0, center_z - radius));
  std::vector<std::vector<int>> ring(rings - 1);
  for (int r = 1; r < rings; ++r) {
    const double phi = kPi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double th = 2.0 * kPi * s / segments;
      ring[r - 1].push_back(b.add(Vec3(radius * std::sin(phi) * std::cos(th),
                                       radius * std::sin(phi) * std::sin(th),
                                       center_z + radius * std::cos(phi))));
    }
  }
  for (int s = 0; s < segments; ++s) {
    const int sn = (s + 1) % segments;
    b.tri(top, ring[0][s], ring[0][sn]);
    b.tri(bot, ring[rings - 2][sn], ring[rings - 2][s]);
    for (int r = 0; r + 1 < rings - 1; ++r)
      b.quad(ring[r][s], ring[r + 1][s], ring[r + 1][sn], ring[r][sn]);
  }
  return b.done();
}

TriMesh make_cylinder(double radius, double z0, double z1, int segments,
                      bool cap_top, double top_radius = -1.0) {
  // top_radius >= 0 turns this into a truncated cone; 0 collapses the top
  // ring to an apex.
  Builder b;
  const double rt = top_radius < 0.0 ? radius : top_radius;
  std::vector<int> lo, hi;
  for (int s = 0; s < segments; ++s) {
    const double th = 2.0 * kPi * s / segments;
    lo.push_back(b.add(Vec3(radius * std::cos(th), radius * std::sin(th), z0)));
  }
  int apex = -1;
  if (rt == 0.0) {
    apex = b.add(Vec3(0, 0, z1));
  } else {
    for (int s = 0; s < segments; ++s) {
      const double th = 2.0 * kPi * s / segments;
      hi.push_back(b.add(Vec3(rt * std::cos(th), rt * std::sin(th), z1)));
    }
  }
  const int cb = b.add(Vec3(0, 0, z0));
  for (int s = 0; s < segments; ++s) {
    const int sn = (s + 1) % segments;
    b.tri(cb, lo[sn], lo[s]);  // bottom cap
    if (apex >= 0) {
      b.tri(lo[s], lo[sn], apex);
    } else {
      b.quad(lo[s], lo[sn], hi[sn], hi[s]);
    }
  }
  if (apex < 0 && cap_top) {
    const int ct = b.add(Vec3(0, 0, z1));
    for (int s = 0; s < segments; ++s) b.tri(ct, hi[s], hi[(s + 1) % segments]);
  }
  return b.done();
}

TriMesh make_capsule(double radius, double height, int segments, int rings) {
  // Cylinder body with hemispherical ends, overall height = height.
  Builder b;
  const double zc0 = radius, zc1 = height - radius;
  std::vector<int> lo, hi;
  for (int s = 0; s < segments; ++s) {
    const double th = 2.0 * kPi * s / segments;
    const double x = radius * std::cos(th), y = radius * std::sin(th);
    lo.push_back(b.add(Vec3(x, y, zc0)));
    hi.push_back(b.add(Vec3(x, y, zc1)));
  }
  for (int s = 0; s < segments; ++s) {
    const int sn = (s + 1) % segments;
    b.quad(lo[s], lo[sn], hi[sn], hi[s]);
  }
  // hemispheres
  for (int half = 0; half < 2; ++half) {
    const double zc = half == 0 ? zc1 : zc0;
    const double sign = half == 0 ? 1.0 : -1.0;
    const int pole = b.add(Vec3(0, 0, zc + sign * radius));
    std::vector<int> prev = half == 0 ? hi : lo;
    for (int r = 1; r < rings; ++r) {
      const double phi = 0.5 * kPi * r / rings;
      std::vector<int> cur;
      for (int s = 0; s < segments; ++s) {
        const double th = 2.0 * kPi * s / segments;
        cur.push_back(b.add(Vec3(radius * std::cos(phi) * std::cos(th),
                                 radius * std::cos(phi) * std::sin(th),
                                 zc + sign * radius * std::sin(phi))));
      }
      for (int s = 0; s < segments; ++s) {
        const int sn = (s + 1) % segments;
        if (half == 0)
          b.quad(prev[s], prev[sn], cur[sn], cur[s]);
        else
          b.quad(prev[sn], prev[s], cur[s], cur[sn]);
      }
      prev = cur;
    }
    for (int s = 0; s < segments; ++s) {
      const int sn = (s + 1) % segments;
      if (half == 0)
        b.tri(prev[s], prev[sn], pole);
      else
        b.tri(prev[sn], prev[s], pole);
    }
  }
  return b.done();
}

TriMesh make_torus(double major, double minor, int segments, int sides) {
  Builder b;
  std::vector<std::vector<int>> ring(segments);
  for (int s = 0; s < segments; ++s) {
    const double th = 2.0 * kPi * s / segments;
    for (int t = 0; t < sides; ++t) {
      const double ph = 2.0 * kPi * t / sides;
      const double r = major + minor * std::cos(ph);
      ring[s].push_back(b.add(
          Vec3(r * std::cos(th), r * std::sin(th), minor + minor * std::sin(ph))));
    }
  }
  for (int s = 0; s < segments; ++s) {
    const int sn = (s + 1) % segments;
    for (int t = 0; t < sides; ++t) {
      const int tn = (t + 1) % sides;
      b.quad(ring[s][t], ring[sn][t], ring[sn][tn], ring[s][tn]);
    }
  }
  return b.done();
}

TriMesh make_wedge(double hx, double hy, double height) {
  Builder b;
  const int a0 = b.add(Vec3(-hx, -hy, 0));
  const int a1 = b.add(Vec3(hx, -hy, 0));
  const int a2 = b.add(Vec3(hx, hy, 0));
  const int a3 = b.add(Vec3(-hx, hy, 0));
  const int t0 = b.add(Vec3(-hx, -hy, height));
  const int t3 = b.add(Vec3(-hx, hy, height));
  b.quad(a0, a3, a2, a1);  // bottom
  b.tri(a0, a1, t0);       // triangular side, y = -hy
  b.tri(a3, t3, a2);       // triangular side, y = +hy
  b.quad(a1, a2, t3, t0);  // ramp
  b.quad(a0, t0, t3, a3);  // vertical face, x = -hx
  return b.done();
}

TriMesh make_pyramid(double hx, double hy, double height) {
  Builder b;
  const int a0 = b.add(Vec3(-hx, -hy, 0));
  const int a1 = b.add(Vec3(hx, -hy, 0));
  const int a2 = b.add(Vec3(hx, hy, 0));
  const int a3 = b.add(Vec3(-hx, hy, 0));
  const int apex = b.add(Vec3(0, 0, height));
  b.quad(a0, a3, a2, a1);
  b.tri(a0, a1, apex);
  b.tri(a1, a2, apex);
  b.tri(a2, a3, apex);
  b.tri(a3, a0, apex);
  return b.done();
}

}  // namespace

double TriMesh::surface_area() const {
  double area = 0.0;
  for (int f = 0; f < faces.rows(); ++f) {
    const Vec3 a = vertices.row(faces(f, 0));
    const Vec3 b = vertices.row(faces(f, 1));
    const Vec3 c = vertices.row(faces(f, 2));
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

void TriMesh::aabb(Vec3& lo, Vec3& hi) const {
  lo = vertices.colwise().minCoeff().transpose();
  hi = vertices.colwise().maxCoeff().transpose();
}

const std::vector<std::string>& primitive_ids() {
  static const std::vector<std::string> ids = {"cube",    "sphere", "cylinder",
                                               "cone",    "capsule", "torus",
                                               "wedge",   "pyramid"};
  return ids;
}

TriMesh make_primitive(const std::string& shape_id) {
  if (shape_id == "cube") return make_box(0.5, 0.5, 0.0, 1.0);
  if (shape_id == "sphere") return make_sphere(0.5, 0.5, 12, 8);
  if (shape_id == "cylinder") return make_cylinder(0.5, 0.0, 1.0, 16, true);
  if (shape_id == "cone") return make_cylinder(0.5, 0.0, 1.0, 16, false, 0.0);
  if (shape_id == "capsule") return make_capsule(0.3, 1.0, 12, 4);
  if (shape_id == "torus") return make_torus(0.35, 0.15, 16, 8);
  if (shape_id == "wedge") return make_wedge(0.5, 0.5, 1.0);
  if (shape_id == "pyramid") return make_pyramid(0.5, 0.5, 1.0);
  throw std::invalid_argument("unknown shape id: " + shape_id);
}

TriMesh transform_mesh(const TriMesh& mesh, double scale, double yaw,
                       const Vec3& translation) {
  TriMesh out = mesh;
  const double c = std::cos(yaw), s = std::sin(yaw);
  for (int i = 0; i < out.vertices.rows(); ++i) {
    Vec3 v = mesh.vertices.row(i) * scale;
    out.vertices.row(i) =
        Vec3(c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()) + translation;
  }
  return out;
}

MatX3 sample_surface(const TriMesh& mesh, double points_per_unit_area,
                     Rng& rng) {
  if (!(points_per_unit_area > 0.0))
    throw std::invalid_argument("points_per_unit_area must be > 0");
  const int nf = static_cast<int>(mesh.faces.rows());
  std::vector<double> cum(nf);
  double total = 0.0;
  for (int f = 0; f < nf; ++f) {
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
    total += 0.5 * (b - a).cross(c - a).norm();
    cum[f] = total;
  }
  const int n = std::max(1, static_cast<int>(std::lround(total * points_per_unit_area)));
  MatX3 out(n, 3);
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    const int f = static_cast<int>(
        std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin());
    const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
    const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
    const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    out.row(i) = a + u * (b - a) + v * (c - a);
  }
  return out;
}

double squared_distance_to_mesh(const Vec3& p, const TriMesh& mesh) {
  auto sq_dist_tri = [&](const Vec3& a, const Vec3& b, const Vec3& c) {
    // Ericson, Real-Time Collision Detection, closest point on triangle.
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0 && d2 <= 0) return (p - a).squaredNorm();
    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0 && d4 <= d3) return (p - b).squaredNorm();
    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
      const double v = d1 / (d1 - d3);
      return (p - (a + v * ab)).squaredNorm();
    }
    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0 && d5 <= d6) return (p - c).squaredNorm();
    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
      const double w = d2 / (d2 - d6);
      return (p - (a + w * ac)).squaredNorm();
    }
    const double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
      const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
      return (p - (b + w * (c - b))).squaredNorm();
    }
    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom, w = vc * denom;
    return (p - (a + ab * v + ac * w)).squaredNorm();
  };
  double best = std::numeric_limits<double>::infinity();
  for (int f = 0; f < mesh.faces.rows(); ++f) {
    best = std::min(best, sq_dist_tri(mesh.vertices.row(mesh.faces(f, 0)),
                                      mesh.vertices.row(mesh.faces(f, 1)),
                                      mesh.vertices.row(mesh.faces(f, 2))));
  }
  return best;
}

namespace {

bool ray_hits_triangle(const Vec3& o, const Vec3& d, const Vec3& a,
                       const Vec3& b, const Vec3& c, double& t) {
  // Moller-Trumbore against the segment o + t*d, t in (0,1).
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  t = e2.dot(qv) * inv;
  return true;
}

bool segment_hits_aabb(const Vec3& o, const Vec3& d, const Vec3& lo,
                       const Vec3& hi) {
  double tmin = 0.0, tmax = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-14) {
      if (o[k] < lo[k] || o[k] > hi[k]) return false;
      continue;
    }
    double t0 = (lo[k] - o[k]) / d[k];
    double t1 = (hi[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return false;
  }
  return true;
}

}  // namespace

std::vector<bool> visible_from_any(const MatX3& points,
                                   const std::vector<TriMesh>& blockers,
                                   const std::vector<Vec3>& viewpoints) {
  const int n = static_cast<int>(points.rows());
  std::vector<Vec3> lo(blockers.size()), hi(blockers.size());
  for (std::size_t m = 0; m < blockers.size(); ++m)
    blockers[m].aabb(lo[m], hi[m]);

  constexpr double kEps = 1e-6;
  std::vector<bool> visible(n, false);
  for (int i = 0; i < n; ++i) {
    const Vec3 p = points.row(i);
    for (const Vec3& vp : viewpoints) {
      const Vec3 d = p - vp;
      bool blocked = false;
      for (std::size_t m = 0; m < blockers.size() && !blocked; ++m) {
        if (!segment_hits_aabb(vp, d, lo[m], hi[m])) continue;
        const TriMesh& mesh = blockers[m];
        for (int f = 0; f < mesh.faces.rows(); ++f) {
          double t;
          if (ray_hits_triangle(vp, d, mesh.vertices.row(mesh.faces(f, 0)),
                                mesh.vertices.row(mesh.faces(f, 1)),
                                mesh.vertices.row(mesh.faces(f, 2)), t) &&
              t > kEps && t < 1.0 - kEps) {
            blocked = true;
            break;
          }
        }
      }
      if (!blocked) {
        visible[i] = true;
        break;
      }
    }
  }
  return visible;
}

}  // namespace glimix
