#pragma once

// Symmetry groups of solids and a synthetic symmetric-solids dataset whose
// descriptors are exact invariants of the pose under each shape's symmetry,
// so the ideal pose distribution of every example is known in closed form.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipdf/binary_io.hpp"
#include "ipdf/dataset.hpp"
#include "ipdf/errors.hpp"
#include "ipdf/random.hpp"
#include "ipdf/rotation.hpp"

namespace ipdf {

inline constexpr int kDefaultDescriptorDim = 16;
inline constexpr int kDefaultOrbitSamples = 360;
inline constexpr std::uint64_t kDescriptorMapSeed = 0x1D5C0DE5u;

struct SymmetryGroup {
  ShapeKind kind = ShapeKind::cube;
  // Discrete kinds: every group element. Empty for continuous kinds.
  std::vector<Rotation> elements;
  // Continuous kinds: rotations about `axis` (in the body frame), plus the
  // half-turn about x when `flip` is set.
  Vector3d axis = Vector3d::UnitZ();
  bool flip = false;

  bool discrete() const { return !elements.empty(); }
};

namespace detail {

// Compares quaternion chords, which stay accurate for nearly equal
// rotations where the arccos inside geodesic_distance loses half the digits.
// The chord is about half the rotation angle.
inline bool contains_rotation(std::span<const Rotation> set, const Rotation& r, double tol) {
  const auto& q = r.quaternion();
  for (const auto& s : set) {
    const auto& p = s.quaternion();
    double minus = 0.0, plus = 0.0;
    for (int i = 0; i < 4; ++i) {
      minus += (q[i] - p[i]) * (q[i] - p[i]);
      plus += (q[i] + p[i]) * (q[i] + p[i]);
    }
    if (2.0 * std::sqrt(std::min(minus, plus)) <= tol) return true;
  }
  return false;
}

// Smallest set containing the identity and closed under right
// multiplication by the generators.
inline std::vector<Rotation> close_under(std::span<const Rotation> generators) {
  std::vector<Rotation> elements{Rotation::identity()};
  for (std::size_t i = 0; i < elements.size(); ++i) {
    for (const auto& g : generators) {
      const Rotation next = elements[i] * g;
      if (!contains_rotation(elements, next, 1e-9)) elements.push_back(next);
    }
    if (elements.size() > 1000) throw Error("generators do not span a finite group");
  }
  return elements;
}

}  // namespace detail

inline SymmetryGroup build_group(ShapeKind kind) {
  SymmetryGroup g;
  g.kind = kind;
  const Vector3d diag = Vector3d(1, 1, 1).normalized();
  switch (kind) {
    case ShapeKind::tetrahedron: {
      const std::vector<Rotation> gens{Rotation::from_axis_angle(diag, 2 * kPi / 3), Rotation::rz(kPi)};
      g.elements = detail::close_under(gens);
      break;
    }
    case ShapeKind::cube: {
      const std::vector<Rotation> gens{Rotation::rz(kPi / 2), Rotation::from_axis_angle(diag, 2 * kPi / 3)};
      g.elements = detail::close_under(gens);
      break;
    }
    case ShapeKind::icosahedron: {
      // A 5-fold axis through the vertex (0, 1, phi) and a 3-fold axis
      // through the face centre along (1, 1, 1).
      const double phi = (1.0 + std::sqrt(5.0)) / 2;
      const std::vector<Rotation> gens{Rotation::from_axis_angle(Vector3d(0, 1, phi), 2 * kPi / 5),
                                       Rotation::from_axis_angle(diag, 2 * kPi / 3)};
      g.elements = detail::close_under(gens);
      break;
    }
    case ShapeKind::cone:
      break;
    case ShapeKind::cylinder:
      g.flip = true;
      break;
    case ShapeKind::sphereX:
      g.elements = {Rotation::identity()};
      break;
  }
  return g;
}

// Built once per kind.
inline const SymmetryGroup& cached_group(ShapeKind kind) {
  static const SymmetryGroup groups[] = {build_group(ShapeKind::tetrahedron), build_group(ShapeKind::cube),
                                         build_group(ShapeKind::icosahedron), build_group(ShapeKind::cone),
                                         build_group(ShapeKind::cylinder), build_group(ShapeKind::sphereX)};
  return groups[static_cast<int>(kind)];
}

// Rotations equivalent to `gt` under the shape's symmetry. Continuous kinds
// are sampled at `samples` points per circle.
inline std::vector<Rotation> orbit(const Rotation& gt, const SymmetryGroup& group,
                                   int samples = kDefaultOrbitSamples) {
  std::vector<Rotation> out;
  auto add = [&out](const Rotation& r) {
    if (!detail::contains_rotation(out, r, 1e-9)) out.push_back(r);
  };
  if (group.discrete()) {
    for (const auto& g : group.elements) add(gt * g);
    return out;
  }
  const int circles = group.flip ? 2 : 1;
  for (int c = 0; c < circles; ++c) {
    const Rotation base = c == 0 ? gt : gt * Rotation::rx(kPi);
    for (int k = 0; k < samples; ++k) {
      out.push_back(base * Rotation::from_axis_angle(group.axis, 2 * kPi * k / samples));
    }
  }
  return out;
}

inline bool marker_visible(const Rotation& gt) { return gt.apply(Vector3d::UnitX()).z() > 0.0; }

// The shape's invariant of `gt`: 9 values fed through the descriptor map.
inline Eigen::Matrix<double, 9, 1> invariant_features(const Rotation& gt, ShapeKind kind) {
  Eigen::Matrix<double, 9, 1> f = Eigen::Matrix<double, 9, 1>::Zero();
  switch (kind) {
    case ShapeKind::tetrahedron:
    case ShapeKind::cube:
    case ShapeKind::icosahedron: {
      // Canonical coset representative: lexicographic minimum of the
      // row-major flattened matrices over the orbit, comparing entries with
      // a 1e-9 tolerance so that rounding noise does not pick a different
      // representative for equivalent inputs.
      const std::vector<Rotation> members = orbit(gt, cached_group(kind));
      std::vector<double> best;
      for (const auto& r : members) {
        const std::vector<double> flat = convert(r, RotationFormat::matrix);
        bool less = best.empty();
        for (std::size_t i = 0; !less && i < flat.size(); ++i) {
          if (flat[i] < best[i] - 1e-9) less = true;
          else if (flat[i] > best[i] + 1e-9) break;
        }
        if (less) best = flat;
      }
      for (int i = 0; i < 9; ++i) f(i) = best[static_cast<std::size_t>(i)];
      break;
    }
    case ShapeKind::cone:
      f.head<3>() = gt.apply(Vector3d::UnitZ());
      break;
    case ShapeKind::cylinder: {
      const Vector3d a = gt.apply(Vector3d::UnitZ());
      const Matrix3d aat = a * a.transpose();
      for (int i = 0; i < 9; ++i) f(i) = aat(i / 3, i % 3);
      break;
    }
    case ShapeKind::sphereX:
      if (marker_visible(gt)) {
        f(0) = 1.0;
        f.segment<3>(1) = gt.apply(Vector3d::UnitX());
        f.segment<3>(4) = gt.apply(Vector3d::UnitY());
      }
      break;
  }
  return f;
}

// Fixed random linear map from the 9 invariant features to `dim` values.
inline Eigen::MatrixXd descriptor_map(int dim) {
  Rng rng(kDescriptorMapSeed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(dim, 9);
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = normal(rng) / 3.0;
  }
  return a;
}

inline Eigen::VectorXd make_descriptor(const Rotation& gt, ShapeKind kind, double noise_sigma, Rng& rng,
                                       int dim = kDefaultDescriptorDim) {
  Eigen::VectorXd d = descriptor_map(dim) * invariant_features(gt, kind);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, noise_sigma);
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) += normal(rng);
  }
  return d;
}

// Record i draws its pose and noise from a stream derived from (seed, i).
inline std::vector<DatasetRecord> generate_dataset(ShapeKind kind, std::size_t n, double noise_sigma,
                                                   std::uint64_t seed, int dim = kDefaultDescriptorDim) {
  if (n < 1) throw Error("dataset size must be >= 1");
  const Eigen::MatrixXd map = descriptor_map(dim);
  std::vector<DatasetRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, i);
    DatasetRecord rec;
    rec.kind = kind;
    rec.gt_rotation = sample_uniform(rng);
    rec.descriptor = map * invariant_features(rec.gt_rotation, kind);
    if (noise_sigma > 0.0) {
      std::normal_distribution<double> normal(0.0, noise_sigma);
      for (Eigen::Index k = 0; k < rec.descriptor.size(); ++k) rec.descriptor(k) += normal(rng);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// JSON lines: {"d": [f32...], "q": [w, x, y, z], "kind": "cube"}.
inline void write_dataset(std::ostream& out, std::span<const DatasetRecord> records) {
  for (const auto& r : records) {
    nlohmann::json d = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.descriptor.size(); ++i) {
      d.push_back(static_cast<double>(static_cast<float>(r.descriptor(i))));
    }
    const auto& q = r.gt_rotation.quaternion();
    const nlohmann::json line = {{"d", d}, {"q", {q[0], q[1], q[2], q[3]}}, {"kind", to_string(r.kind)}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("dataset write failed");
}

inline void write_dataset(const std::string& path, std::span<const DatasetRecord> records) {
  auto out = io::open_for_write(path);
  write_dataset(out, records);
}

inline std::vector<DatasetRecord> read_dataset(std::istream& in, const std::string& what) {
  std::vector<DatasetRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DatasetRecord r;
      const auto& d = j.at("d");
      r.descriptor.resize(static_cast<Eigen::Index>(d.size()));
      for (std::size_t i = 0; i < d.size(); ++i) r.descriptor(static_cast<Eigen::Index>(i)) = d[i].get<double>();
      const auto& q = j.at("q");
      if (q.size() != 4) throw FormatError("q must have 4 entries");
      r.gt_rotation = Rotation(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      r.kind = shape_kind_from_string(j.at("kind").get<std::string>());
      if (!out.empty() && out.front().descriptor.size() != r.descriptor.size()) {
        throw FormatError("descriptor length differs from the first record");
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError(what + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<DatasetRecord> read_dataset(const std::string& path) {
  auto in = io::open_for_read(path);
  return read_dataset(in, path);
}

}  // namespace ipdf
