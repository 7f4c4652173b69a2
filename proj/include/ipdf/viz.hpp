#pragma once

// Hopf-projection plots of pose distributions: each rotation becomes a point
// on the 2-sphere (the image of a canonical axis) coloured by the tilt about
// that axis, drawn in the Mollweide projection as SVG.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ipdf/binary_io.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/infer.hpp"
#include "ipdf/rotation.hpp"
#include "ipdf/so3_grid.hpp"

namespace ipdf {

enum class CanonicalAxis { x = 0, y = 1, z = 2 };

inline CanonicalAxis canonical_axis_from_string(const std::string& s) {
  if (s == "x") return CanonicalAxis::x;
  if (s == "y") return CanonicalAxis::y;
  if (s == "z") return CanonicalAxis::z;
  throw Error("unknown axis '" + s + "' (expected x, y or z)");
}

inline Vector3d axis_vector(CanonicalAxis a) { return Vector3d::Unit(static_cast<int>(a)); }

// Zero-tilt frame at `direction`: the shortest rotation carrying the
// canonical axis onto it. At the antipode the limit frame is a half-turn
// about the next axis in the cycle (y for the z axis).
inline Rotation reference_frame(const Vector3d& direction, CanonicalAxis axis) {
  const Vector3d a = axis_vector(axis);
  const Vector3d d = direction.normalized();
  const double c = std::clamp(a.dot(d), -1.0, 1.0);
  const Vector3d cross = a.cross(d);
  const double s = cross.norm();
  if (s < 1e-12) {
    if (c > 0) return Rotation::identity();
    return Rotation::from_axis_angle(axis_vector(static_cast<CanonicalAxis>((static_cast<int>(axis) + 2) % 3)), kPi);
  }
  return Rotation::from_axis_angle(cross / s, std::atan2(s, c));
}

struct HopfCoordinates {
  Vector3d direction;
  double tilt = 0.0;  // [0, 2*pi)
};

inline HopfCoordinates hopf_split(const Rotation& r, CanonicalAxis axis = CanonicalAxis::z) {
  HopfCoordinates out;
  out.direction = r.apply(axis_vector(axis));
  const Rotation residual = reference_frame(out.direction, axis).inverse() * r;
  const auto& q = residual.quaternion();
  const double along = q[1 + static_cast<int>(axis)];
  double tilt = 2.0 * std::atan2(along, q[0]);
  tilt = std::fmod(tilt, 2 * kPi);
  if (tilt < 0) tilt += 2 * kPi;
  if (tilt >= 2 * kPi) tilt = 0.0;
  out.tilt = tilt;
  return out;
}

inline Rotation hopf_compose(const HopfCoordinates& h, CanonicalAxis axis = CanonicalAxis::z) {
  return reference_frame(h.direction, axis) * Rotation::from_axis_angle(axis_vector(axis), h.tilt);
}

// Equal-area projection onto [-2*sqrt2, 2*sqrt2] x [-sqrt2, sqrt2].
inline std::pair<double, double> mollweide(double lat, double lon) {
  const double sqrt2 = std::sqrt(2.0);
  double t;
  if (std::abs(lat) >= kPi / 2 - 1e-15) {
    t = std::copysign(kPi / 2, lat);
  } else {
    const double target = kPi * std::sin(lat);
    t = lat;
    for (int it = 0; it < 50; ++it) {
      const double g = 2 * t + std::sin(2 * t) - target;
      const double dg = 2 + 2 * std::cos(2 * t);
      if (dg == 0.0) break;
      const double step = g / dg;
      t -= step;
      if (std::abs(step) < 1e-12) break;
    }
  }
  return {2 * sqrt2 / kPi * lon * std::cos(t), sqrt2 * std::sin(t)};
}

inline double latitude(const Vector3d& d) { return std::asin(std::clamp(d.z(), -1.0, 1.0)); }
inline double longitude(const Vector3d& d) { return std::atan2(d.y(), d.x()); }

struct VizConfig {
  CanonicalAxis axis = CanonicalAxis::z;
  // Dot radius in px is size_scale * width * sqrt(cell probability).
  double size_scale = 0.02;
  // Cells below density_floor times the uniform density are not drawn.
  double density_floor = 0.0;
  int width = 800;
  std::vector<Rotation> ground_truth;

  void validate() const {
    if (width <= 0) throw Error("width must be positive");
    if (!(density_floor >= 0.0)) throw Error("density_floor must be >= 0");
    if (!(size_scale > 0.0)) throw Error("size_scale must be positive");
  }
};

struct VizPoint {
  std::size_t cell = 0;
  HopfCoordinates hopf;
  double x = 0.0;  // SVG pixel coordinates
  double y = 0.0;
  double radius = 0.0;
  double probability = 0.0;
};

inline int viz_height(const VizConfig& c) { return c.width / 2; }

inline std::pair<double, double> to_pixels(double lat, double lon, const VizConfig& c) {
  const auto [mx, my] = mollweide(lat, lon);
  const double sqrt2 = std::sqrt(2.0);
  const double w = c.width;
  const double h = viz_height(c);
  const double margin = 0.02 * w;
  const double sx = (w / 2 - margin) / (2 * sqrt2);
  const double sy = (h / 2 - margin) / sqrt2;
  const double s = std::min(sx, sy);
  return {w / 2 + s * mx, h / 2 - s * my};
}

// Visible dots in drawing order: ascending probability, ties by cell index.
inline std::vector<VizPoint> project_points(const PoseDistribution& dist, const EquivolumetricGrid& grid,
                                            const VizConfig& config) {
  config.validate();
  if (dist.size() != grid.size()) throw DimensionMismatch("distribution and grid sizes differ");
  const double threshold = config.density_floor * kUniformDensity;
  std::vector<VizPoint> out;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double d = dist.densities[i];
    if (!(d > 0.0) || d < threshold) continue;
    VizPoint p;
    p.cell = i;
    p.hopf = hopf_split(grid.rotations[i], config.axis);
    std::tie(p.x, p.y) = to_pixels(latitude(p.hopf.direction), longitude(p.hopf.direction), config);
    p.probability = dist.probability(i);
    p.radius = config.size_scale * config.width * std::sqrt(p.probability);
    out.push_back(p);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const VizPoint& a, const VizPoint& b) { return a.probability < b.probability; });
  return out;
}

// Fully saturated colour for hue in [0, 1).
inline std::string hue_to_hex(double hue) {
  const double h6 = (hue - std::floor(hue)) * 6.0;
  const int sector = static_cast<int>(h6) % 6;
  const double f = h6 - std::floor(h6);
  std::array<double, 3> rgb{};
  switch (sector) {
    case 0: rgb = {1, f, 0}; break;
    case 1: rgb = {1 - f, 1, 0}; break;
    case 2: rgb = {0, 1, f}; break;
    case 3: rgb = {0, 1 - f, 1}; break;
    case 4: rgb = {f, 0, 1}; break;
    default: rgb = {1, 0, 1 - f}; break;
  }
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(rgb[0] * 255)),
                static_cast<int>(std::lround(rgb[1] * 255)), static_cast<int>(std::lround(rgb[2] * 255)));
  return buf;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline void polyline(std::ostream& out, const std::vector<std::pair<double, double>>& pts) {
  out << "<polyline points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) out << ' ';
    out << fmt(pts[i].first) << ',' << fmt(pts[i].second);
  }
  out << "\"/>\n";
}

}  // namespace detail

inline void render_svg(std::ostream& out, const PoseDistribution& dist, const EquivolumetricGrid& grid,
                       const VizConfig& config) {
  const std::vector<VizPoint> points = project_points(dist, grid, config);
  const int w = config.width;
  const int h = viz_height(config);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
      << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";

  out << "<g id=\"graticule\" fill=\"none\" stroke=\"#c8c8c8\" stroke-width=\"0.7\">\n";
  for (int lon = -180; lon <= 180; lon += 30) {
    std::vector<std::pair<double, double>> pts;
    for (int lat = -90; lat <= 90; lat += 2) pts.push_back(to_pixels(kPi * lat / 180.0, kPi * lon / 180.0, config));
    detail::polyline(out, pts);
  }
  for (int lat = -60; lat <= 60; lat += 30) {
    std::vector<std::pair<double, double>> pts;
    for (int lon = -180; lon <= 180; lon += 2) pts.push_back(to_pixels(kPi * lat / 180.0, kPi * lon / 180.0, config));
    detail::polyline(out, pts);
  }
  out << "</g>\n";

  out << "<g id=\"density\" stroke=\"none\">\n";
  for (const auto& p : points) {
    out << "<circle class=\"dot\" cx=\"" << detail::fmt(p.x) << "\" cy=\"" << detail::fmt(p.y) << "\" r=\""
        << detail::fmt(std::max(p.radius, 0.3)) << "\" fill=\"" << hue_to_hex(p.hopf.tilt / (2 * kPi))
        << "\"/>\n";
  }
  out << "</g>\n";

  if (!config.ground_truth.empty()) {
    out << "<g id=\"ground-truth\" fill=\"none\" stroke-width=\"1.5\">\n";
    const double r = std::max(4.0, config.size_scale * w * 0.5);
    for (const auto& g : config.ground_truth) {
      const HopfCoordinates hc = hopf_split(g, config.axis);
      const auto [x, y] = to_pixels(latitude(hc.direction), longitude(hc.direction), config);
      out << "<circle class=\"gt\" cx=\"" << detail::fmt(x) << "\" cy=\"" << detail::fmt(y) << "\" r=\""
          << detail::fmt(r) << "\" stroke=\"" << hue_to_hex(hc.tilt / (2 * kPi)) << "\"/>\n";
    }
    out << "</g>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("SVG write failed");
}

inline void render_svg(const std::string& path, const PoseDistribution& dist, const EquivolumetricGrid& grid,
                       const VizConfig& config) {
  auto out = io::open_for_write(path);
  render_svg(out, dist, grid, config);
}

}  // namespace ipdf
