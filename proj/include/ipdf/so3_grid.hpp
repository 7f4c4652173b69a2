#pragma once

// Hierarchical equivolumetric grids on SO(3): HEALPix pixel centres on the
// 2-sphere, each threaded with a circle of tilts along its Hopf fibre.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ipdf/binary_io.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/parallel.hpp"
#include "ipdf/rotation.hpp"
#include "ipdf/rotation_index.hpp"

namespace ipdf {

inline constexpr int kMaxGridLevel = 6;
inline constexpr double kSo3Volume = kPi * kPi;

inline std::size_t grid_size(int level) { return std::size_t{72} << (3 * level); }
inline std::int64_t healpix_nside(int level) { return std::int64_t{1} << level; }
inline std::int64_t tilt_count(int level) { return 6 * (std::int64_t{1} << level); }

struct SpherePoint {
  double z;    // cos(colatitude)
  double phi;  // longitude in [0, 2pi)
};

namespace detail {

inline std::int64_t isqrt(std::int64_t v) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

}  // namespace detail

// Centre of RING-scheme pixel `pix` at resolution `nside`.
inline SpherePoint healpix_pixel_center(std::int64_t nside, std::int64_t pix) {
  const std::int64_t npix = 12 * nside * nside;
  const std::int64_t ncap = 2 * nside * (nside - 1);
  const double halfpi_over_nside = kPi / 2 / static_cast<double>(nside);
  const double ns2 = static_cast<double>(nside * nside);
  if (pix < ncap) {
    const std::int64_t ring = (1 + detail::isqrt(1 + 2 * pix)) >> 1;
    const std::int64_t iphi = pix + 1 - 2 * ring * (ring - 1);
    return {1.0 - static_cast<double>(ring * ring) / (3.0 * ns2),
            (static_cast<double>(iphi) - 0.5) * kPi / 2 / static_cast<double>(ring)};
  }
  if (pix < npix - ncap) {
    const std::int64_t ip = pix - ncap;
    const std::int64_t ring = ip / (4 * nside) + nside;
    const std::int64_t iphi = ip % (4 * nside) + 1;
    const double fodd = ((ring + nside) & 1) ? 1.0 : 0.5;
    return {static_cast<double>(2 * nside - ring) * 2.0 / (3.0 * static_cast<double>(nside)),
            (static_cast<double>(iphi) - fodd) * halfpi_over_nside};
  }
  const std::int64_t ip = npix - pix;
  const std::int64_t ring = (1 + detail::isqrt(2 * ip - 1)) >> 1;
  const std::int64_t iphi = 4 * ring + 1 - (ip - 2 * ring * (ring - 1));
  return {-1.0 + static_cast<double>(ring * ring) / (3.0 * ns2),
          (static_cast<double>(iphi) - 0.5) * kPi / 2 / static_cast<double>(ring)};
}

// Hopf coordinates (sphere point, tilt psi) to rotation.
inline Rotation hopf_rotation(const SpherePoint& p, double psi) {
  const double c = std::sqrt(std::max(0.0, (1.0 + p.z) / 2));  // cos(theta/2)
  const double s = std::sqrt(std::max(0.0, (1.0 - p.z) / 2));  // sin(theta/2)
  return {c * std::cos(psi / 2), c * std::sin(psi / 2), s * std::cos(p.phi + psi / 2),
          s * std::sin(p.phi + psi / 2)};
}

struct EquivolumetricGrid {
  int level = 0;
  std::vector<Rotation> rotations;

  std::size_t size() const noexcept { return rotations.size(); }
  double cell_volume() const { return kSo3Volume / static_cast<double>(rotations.size()); }
};

// Pixel-major, then tilt: cell index = pixel * tilt_count(level) + k.
inline EquivolumetricGrid generate_grid(int level, unsigned threads = 1) {
  if (level < 0) throw Error("grid level must be non-negative");
  if (level > kMaxGridLevel) {
    throw LevelTooLarge("grid level " + std::to_string(level) + " exceeds the maximum of " +
                        std::to_string(kMaxGridLevel));
  }
  const std::int64_t nside = healpix_nside(level);
  const std::int64_t tilts = tilt_count(level);
  const std::int64_t npix = 12 * nside * nside;
  EquivolumetricGrid grid;
  grid.level = level;
  grid.rotations.resize(grid_size(level));
  parallel_for(static_cast<std::size_t>(npix), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t pix = begin; pix < end; ++pix) {
      const SpherePoint p = healpix_pixel_center(nside, static_cast<std::int64_t>(pix));
      for (std::int64_t k = 0; k < tilts; ++k) {
        const double psi = (static_cast<double>(k) + 0.5) * 2.0 * kPi / static_cast<double>(tilts);
        grid.rotations[pix * static_cast<std::size_t>(tilts) + static_cast<std::size_t>(k)] =
            hopf_rotation(p, psi);
      }
    }
  });
  return grid;
}

// Linear scan; see RotationIndex for the accelerated equivalent.
inline std::size_t nearest_cell(const EquivolumetricGrid& grid, const Rotation& r) {
  return nearest_by_scan(grid.rotations, r);
}

// Left-translates the grid so that element 0 lands on `target`.
inline std::vector<Rotation> rotate_grid(std::span<const Rotation> grid, const Rotation& target) {
  std::vector<Rotation> out;
  out.reserve(grid.size());
  if (grid.empty()) return out;
  const Rotation shift = target * grid.front().inverse();
  out.push_back(target);
  for (std::size_t i = 1; i < grid.size(); ++i) out.push_back(shift * grid[i]);
  return out;
}

inline std::vector<Rotation> rotate_grid(const EquivolumetricGrid& grid, const Rotation& target) {
  return rotate_grid(std::span<const Rotation>(grid.rotations), target);
}

// Distance from every cell to its nearest other cell.
inline std::vector<double> nearest_neighbor_spacings(const RotationIndex& index, unsigned threads = 1) {
  const auto& rots = index.rotations();
  std::vector<double> out(rots.size());
  parallel_for(rots.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = geodesic_distance(rots[i], rots[index.nearest(rots[i], i)]);
    }
  });
  return out;
}

inline double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return (lower + upper) / 2;
}

inline double median_grid_spacing(const EquivolumetricGrid& grid, unsigned threads = 1) {
  const RotationIndex index(grid.rotations);
  return median(nearest_neighbor_spacings(index, threads));
}

// "SO3G" rotation-set files. Grids carry their level; orbit dumps and other
// free-form sets use kFreeFormLevel.
inline constexpr std::uint8_t kGridFileVersion = 1;
inline constexpr std::uint8_t kFreeFormLevel = 0xFF;

inline void write_rotation_set(std::ostream& out, std::uint8_t level, std::span<const Rotation> rotations) {
  io::write_magic(out, "SO3G");
  io::write_le<std::uint8_t>(out, kGridFileVersion);
  io::write_le<std::uint8_t>(out, level);
  io::write_le<std::uint64_t>(out, rotations.size());
  for (const Rotation& r : rotations) write_rotation(out, r);
  if (!out) throw IoError("write failed");
}

inline void write_grid(std::ostream& out, const EquivolumetricGrid& grid) {
  write_rotation_set(out, static_cast<std::uint8_t>(grid.level), grid.rotations);
}

inline void write_grid(const std::string& path, const EquivolumetricGrid& grid) {
  auto out = io::open_for_write(path);
  write_grid(out, grid);
}

struct RotationSet {
  std::uint8_t level = kFreeFormLevel;
  std::vector<Rotation> rotations;
};

inline RotationSet read_rotation_set(std::istream& in, const std::string& what) {
  io::expect_magic(in, "SO3G", what);
  const auto version = io::read_le<std::uint8_t>(in);
  if (version != kGridFileVersion) {
    throw FormatError("unsupported SO3G version " + std::to_string(version) + " in " + what);
  }
  RotationSet set;
  set.level = io::read_le<std::uint8_t>(in);
  const auto count = io::read_le<std::uint64_t>(in);
  if (set.level != kFreeFormLevel &&
      (set.level > kMaxGridLevel || count != grid_size(set.level))) {
    throw FormatError("grid count does not match its level in " + what);
  }
  set.rotations.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) set.rotations.push_back(read_rotation(in));
  return set;
}

inline RotationSet read_rotation_set(const std::string& path) {
  auto in = io::open_for_read(path);
  return read_rotation_set(in, path);
}

inline EquivolumetricGrid read_grid(const std::string& path) {
  RotationSet set = read_rotation_set(path);
  if (set.level == kFreeFormLevel) throw FormatError(path + " is a rotation set, not a grid");
  return {set.level, std::move(set.rotations)};
}

}  // namespace ipdf
