#include "glimix/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace glimix {

PointCloud load_points_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<Vec3> pos;
  std::vector<int> labels;
  bool any_label = false;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    double x, y, z;
    int label = 0;
    int got = std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &x, &y, &z, &label);
    if (got == 4) {
      any_label = true;
    } else if (got != 3) {
      throw std::runtime_error("malformed row in " + path + " at line " +
                               std::to_string(line_no));
    }
    pos.emplace_back(x, y, z);
    labels.push_back(label);
  }
  if (pos.empty()) throw std::runtime_error("empty input: " + path);

  PointCloud cloud;
  cloud.positions.resize(static_cast<int>(pos.size()), 3);
  for (std::size_t i = 0; i < pos.size(); ++i)
    cloud.positions.row(static_cast<Eigen::Index>(i)) = pos[i];
  if (any_label) cloud.labels = labels;
  return cloud;
}

void write_points_csv(const std::string& path, const MatX3& positions,
                      const std::vector<int>& labels) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  char row[160];
  for (int i = 0; i < positions.rows(); ++i) {
    std::snprintf(row, sizeof(row), "%.17g,%.17g,%.17g,%d\n", positions(i, 0),
                  positions(i, 1), positions(i, 2),
                  labels.empty() ? 0 : labels[i]);
    f << row;
  }
}

namespace {

// distinct label colors; label 0 renders gray
constexpr unsigned char kPalette[][3] = {
    {150, 150, 150}, {230, 25, 75},  {60, 180, 75},   {255, 225, 25},
    {0, 130, 200},   {245, 130, 48}, {145, 30, 180},  {70, 240, 240},
    {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128},
    {220, 190, 255}, {170, 110, 40}, {128, 0, 0},     {170, 255, 195},
};
constexpr int kPaletteSize = static_cast<int>(sizeof(kPalette) / sizeof(kPalette[0]));

}  // namespace

void write_ply(const std::string& path, const MatX3& positions,
               const std::vector<int>& labels) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "ply\nformat ascii 1.0\nelement vertex " << positions.rows()
    << "\nproperty float x\nproperty float y\nproperty float z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\n"
       "end_header\n";
  char row[160];
  for (int i = 0; i < positions.rows(); ++i) {
    const int label = labels.empty() ? 0 : labels[i];
    const auto& c = kPalette[((label % kPaletteSize) + kPaletteSize) % kPaletteSize];
    std::snprintf(row, sizeof(row), "%.6f %.6f %.6f %u %u %u\n", positions(i, 0),
                  positions(i, 1), positions(i, 2), c[0], c[1], c[2]);
    f << row;
  }
}

void write_svg_curve(const std::string& path, const std::vector<double>& values,
                     const std::string& title) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  const int w = 640, h = 420, pad = 50;
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
       "font-family=\"sans-serif\" font-size=\"16\">"
    << title << "</text>\n";
  // axes
  f << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad
    << "\" y2=\"" << h - pad << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << pad
    << "\" y2=\"" << pad << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const int y = static_cast<int>(h - pad - v * (h - 2 * pad));
    f << "<text x=\"" << pad - 8 << "\" y=\"" << y + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << v << "</text>\n";
    f << "<line x1=\"" << pad - 4 << "\" y1=\"" << y << "\" x2=\"" << pad
      << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
  }
  if (!values.empty()) {
    f << "<polyline fill=\"none\" stroke=\"#0066cc\" stroke-width=\"2\" points=\"";
    const int n = static_cast<int>(values.size());
    for (int i = 0; i < n; ++i) {
      const double x =
          pad + (n == 1 ? 0.5 : static_cast<double>(i) / (n - 1)) * (w - 2 * pad);
      const double clamped = std::clamp(values[i], 0.0, 1.0);
      const double y = h - pad - clamped * (h - 2 * pad);
      f << x << "," << y << " ";
    }
    f << "\"/>\n";
  }
  f << "</svg>\n";
}

}  // namespace glimix
