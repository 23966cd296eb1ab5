#pragma once

#include <string>
#include <vector>

#include "glimix/geometry.hpp"

namespace glimix {

/// Reads `x,y,z[,label]` rows; throws with file and line on malformed input.
PointCloud load_points_csv(const std::string& path);

void write_points_csv(const std::string& path, const MatX3& positions,
                      const std::vector<int>& labels);

/// ASCII PLY with one vertex per point, colored by label.
void write_ply(const std::string& path, const MatX3& positions,
               const std::vector<int>& labels);

/// Minimal SVG line chart of an ascending performance curve.
void write_svg_curve(const std::string& path, const std::vector<double>& values,
                     const std::string& title);

}  // namespace glimix
