#pragma once

// Inference on a trained density model: the grid-normalized distribution,
// single-pose prediction by grid argmax plus projected gradient ascent, and
// mode extraction by density thresholding and connected components.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ipdf/binary_io.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/model.hpp"
#include "ipdf/rotation.hpp"
#include "ipdf/rotation_index.hpp"
#include "ipdf/so3_grid.hpp"
#include "ipdf/train.hpp"
#include "ipdf/union_find.hpp"

namespace ipdf {

inline constexpr double kUniformDensity = 1.0 / kSo3Volume;

// Per-cell probability densities over an equivolumetric grid; cell i holds
// probability densities[i] * cell_volume().
struct PoseDistribution {
  int grid_level = 0;
  std::vector<double> densities;

  std::size_t size() const noexcept { return densities.size(); }
  double cell_volume() const { return kSo3Volume / static_cast<double>(densities.size()); }
  double probability(std::size_t i) const { return densities[i] * cell_volume(); }
};

// Softmax of the log densities divided by the cell volume.
inline PoseDistribution distribution_from_log_densities(std::span<const double> log_densities, int grid_level) {
  PoseDistribution dist;
  dist.grid_level = grid_level;
  const double lse = log_sum_exp(log_densities);
  const double volume = kSo3Volume / static_cast<double>(log_densities.size());
  dist.densities.resize(log_densities.size());
  for (std::size_t i = 0; i < log_densities.size(); ++i) {
    dist.densities[i] = std::exp(log_densities[i] - lse) / volume;
  }
  return dist;
}

inline PoseDistribution evaluate_distribution(const ImplicitDensityModel& model, const VectorXd& descriptor,
                                              const EquivolumetricGrid& grid, unsigned threads = 1) {
  const std::vector<double> f = model.forward(descriptor, grid.rotations, threads);
  return distribution_from_log_densities(f, grid.level);
}

// Assigns probability masses[k] to the cell nearest points[k] (masses are
// accumulated when several points share a cell).
inline PoseDistribution distribution_from_point_masses(const EquivolumetricGrid& grid, const RotationIndex& index,
                                                       std::span<const Rotation> points,
                                                       std::span<const double> masses) {
  if (points.size() != masses.size()) throw DimensionMismatch("one mass per point is required");
  PoseDistribution dist;
  dist.grid_level = grid.level;
  dist.densities.assign(grid.size(), 0.0);
  const double volume = grid.cell_volume();
  for (std::size_t k = 0; k < points.size(); ++k) dist.densities[index.nearest(points[k])] += masses[k] / volume;
  return dist;
}

struct AscentOptions {
  int steps = 100;
  double step_size = 1e-3;
  int max_halvings = 10;
};

struct PoseEstimate {
  Rotation rotation;
  std::size_t start_cell = 0;
  // f at the start and after every ascent step (non-decreasing).
  std::vector<double> trace;
};

// Grid argmax of f (ties to the lowest index), then projected gradient
// ascent M <- project(M + step * df/dM). A step that does not increase f is
// retried with half the step size, up to max_halvings times, and otherwise
// skipped.
inline PoseEstimate predict_pose(const ImplicitDensityModel& model, const VectorXd& descriptor,
                                 const EquivolumetricGrid& grid, const AscentOptions& options = {},
                                 unsigned threads = 1) {
  const std::vector<double> f = model.forward(descriptor, grid.rotations, threads);
  const auto best = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
  PoseEstimate est;
  est.start_cell = best;
  est.rotation = grid.rotations[best];
  double current = model.log_density(descriptor, est.rotation);
  est.trace.push_back(current);
  for (int step = 0; step < options.steps; ++step) {
    const Matrix3d m = est.rotation.matrix();
    const Matrix3d g = model.input_gradient(descriptor, est.rotation);
    double eta = options.step_size;
    for (int h = 0; h <= options.max_halvings; ++h, eta /= 2) {
      Rotation candidate;
      try {
        candidate = project_to_so3(m + eta * g);
      } catch (const DegenerateMatrix&) {
        continue;
      }
      const double value = model.log_density(descriptor, candidate);
      if (value >= current) {
        est.rotation = candidate;
        current = value;
        break;
      }
    }
    est.trace.push_back(current);
  }
  return est;
}

struct Mode {
  Rotation center;
  std::size_t center_cell = 0;
  double mass = 0.0;
  std::vector<std::size_t> members;  // ascending cell indices
};

struct ModeSet {
  std::vector<Mode> modes;  // descending mass
};

// Twice the median nearest-neighbour spacing of the grid.
inline double default_link_radius(const EquivolumetricGrid& grid, unsigned threads = 1) {
  return 2.0 * median_grid_spacing(grid, threads);
}

// Keeps cells with density >= density_floor * uniform density, links kept
// cells closer than link_radius, and returns the connected components
// ranked by probability mass. Each centre is the component's most likely
// cell.
inline ModeSet extract_modes(const PoseDistribution& dist, const EquivolumetricGrid& grid, double density_floor,
                             double link_radius) {
  if (!(density_floor > 0.0) || !(link_radius > 0.0)) {
    throw Error("density_floor and link_radius must be positive");
  }
  if (dist.size() != grid.size()) throw DimensionMismatch("distribution and grid sizes differ");
  const double threshold = density_floor * kUniformDensity;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist.densities[i] >= threshold) kept.push_back(i);
  }
  if (kept.empty()) throw EmptyModeSet("no cell reaches the density floor");

  std::vector<Rotation> kept_rotations;
  kept_rotations.reserve(kept.size());
  for (std::size_t i : kept) kept_rotations.push_back(grid.rotations[i]);
  const RotationIndex index(kept_rotations);
  UnionFind sets(kept.size());
  for (std::size_t a = 0; a < kept.size(); ++a) {
    for (std::size_t b : index.within(kept_rotations[a], link_radius)) {
      if (b > a) sets.unite(a, b);
    }
  }

  std::map<std::size_t, Mode> by_root;
  for (std::size_t a = 0; a < kept.size(); ++a) {
    Mode& mode = by_root[sets.find(a)];
    const std::size_t cell = kept[a];
    if (mode.members.empty() || dist.densities[cell] > dist.densities[mode.center_cell]) {
      mode.center_cell = cell;
    }
    mode.members.push_back(cell);
    mode.mass += dist.probability(cell);
  }
  ModeSet out;
  for (auto& [root, mode] : by_root) {
    mode.center = grid.rotations[mode.center_cell];
    out.modes.push_back(std::move(mode));
  }
  std::sort(out.modes.begin(), out.modes.end(), [](const Mode& a, const Mode& b) {
    if (a.mass != b.mass) return a.mass > b.mass;
    return a.center_cell < b.center_cell;
  });
  return out;
}

inline std::vector<Rotation> top_k_candidates(const ModeSet& modes, std::size_t k) {
  if (k < 1) throw Error("k must be >= 1");
  std::vector<Rotation> out;
  for (std::size_t i = 0; i < std::min(k, modes.modes.size()); ++i) out.push_back(modes.modes[i].center);
  return out;
}

// "SO3D" distribution dumps: u8 version, u8 grid level, u64 N, N f32
// densities in grid-file cell order.
inline constexpr std::uint8_t kDistributionVersion = 1;

inline void write_distribution(std::ostream& out, const PoseDistribution& dist) {
  io::write_magic(out, "SO3D");
  io::write_le<std::uint8_t>(out, kDistributionVersion);
  io::write_le<std::uint8_t>(out, static_cast<std::uint8_t>(dist.grid_level));
  io::write_le<std::uint64_t>(out, dist.densities.size());
  for (double d : dist.densities) io::write_le<float>(out, static_cast<float>(d));
  if (!out) throw IoError("distribution write failed");
}

inline void write_distribution(const std::string& path, const PoseDistribution& dist) {
  auto out = io::open_for_write(path);
  write_distribution(out, dist);
}

inline PoseDistribution read_distribution(std::istream& in, const std::string& what) {
  io::expect_magic(in, "SO3D", what);
  const auto version = io::read_le<std::uint8_t>(in);
  if (version != kDistributionVersion) {
    throw FormatError("unsupported SO3D version " + std::to_string(version) + " in " + what);
  }
  PoseDistribution dist;
  dist.grid_level = io::read_le<std::uint8_t>(in);
  const auto n = io::read_le<std::uint64_t>(in);
  if (dist.grid_level > kMaxGridLevel || n != grid_size(dist.grid_level)) {
    throw FormatError("distribution size does not match its grid level in " + what);
  }
  dist.densities.resize(n);
  for (auto& d : dist.densities) d = io::read_le<float>(in);
  return dist;
}

inline PoseDistribution read_distribution(const std::string& path) {
  auto in = io::open_for_read(path);
  return read_distribution(in, path);
}

}  // namespace ipdf
