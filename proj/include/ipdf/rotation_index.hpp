#pragma once

// Exact nearest-neighbour and radius queries over a fixed set of rotations.
//
// Geodesic distance is monotone in |<q_a, q_b>|, and for unit quaternions
// |q - p|^2 = 2 - 2<q, p>. Storing both p and -p in a 4-D k-d tree turns
// "max |dot|" into an ordinary Euclidean nearest-neighbour search.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "ipdf/rotation.hpp"

namespace ipdf {

inline constexpr std::size_t kNoIndex = std::numeric_limits<std::size_t>::max();

// Reference implementation: linear scan, ties broken by lowest index.
inline std::size_t nearest_by_scan(std::span<const Rotation> set, const Rotation& r,
                                   std::size_t exclude = kNoIndex) {
  std::size_t best = kNoIndex;
  double best_dot = -1.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (i == exclude) continue;
    const double dot = abs_quaternion_dot(r, set[i]);
    if (dot > best_dot) {
      best_dot = dot;
      best = i;
    }
  }
  return best;
}

class RotationIndex {
 public:
  RotationIndex() = default;

  explicit RotationIndex(std::span<const Rotation> set) : rotations_(set.begin(), set.end()) {
    const std::size_t n = rotations_.size();
    points_.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& q = rotations_[i].quaternion();
      points_[2 * i] = {{q[0], q[1], q[2], q[3]}, static_cast<std::uint32_t>(i)};
      points_[2 * i + 1] = {{-q[0], -q[1], -q[2], -q[3]}, static_cast<std::uint32_t>(i)};
    }
    if (!points_.empty()) build(0, points_.size());
  }

  std::size_t size() const noexcept { return rotations_.size(); }
  const std::vector<Rotation>& rotations() const noexcept { return rotations_; }

  // Same result as nearest_by_scan, including tie-breaking.
  std::size_t nearest(const Rotation& r, std::size_t exclude = kNoIndex) const {
    if (nodes_.empty()) return kNoIndex;
    Search s{r, {r.w(), r.x(), r.y(), r.z()}, exclude, kNoIndex, -1.0};
    search(0, s);
    return s.best;
  }

  // All indices within `radius` radians (inclusive), ascending.
  std::vector<std::size_t> within(const Rotation& r, double radius) const {
    std::vector<std::size_t> out;
    if (nodes_.empty()) return out;
    const double half = std::min(radius, kPi) / 2;
    const double chord2 = 2.0 - 2.0 * std::cos(half) + 1e-12;
    const std::array<double, 4> q{r.w(), r.x(), r.y(), r.z()};
    collect(0, q, r, radius, chord2, out);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  struct Point {
    std::array<double, 4> c;
    std::uint32_t source;
  };
  struct Node {
    std::size_t begin, end;
    int dim;  // -1 for leaves
    double split;
    std::size_t left, right;
  };
  struct Search {
    const Rotation& query;
    std::array<double, 4> q;
    std::size_t exclude;
    std::size_t best;
    double best_dot;
  };

  static constexpr std::size_t kLeafSize = 8;

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, -1, 0.0, 0, 0});
    if (end - begin <= kLeafSize) return id;
    std::array<double, 4> lo, hi;
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (std::size_t i = begin; i < end; ++i) {
      for (int d = 0; d < 4; ++d) {
        lo[d] = std::min(lo[d], points_[i].c[d]);
        hi[d] = std::max(hi[d], points_[i].c[d]);
      }
    }
    int dim = 0;
    for (int d = 1; d < 4; ++d) {
      if (hi[d] - lo[d] > hi[dim] - lo[dim]) dim = d;
    }
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(points_.begin() + begin, points_.begin() + mid, points_.begin() + end,
                     [dim](const Point& a, const Point& b) { return a.c[dim] < b.c[dim]; });
    const double split = points_[mid].c[dim];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].dim = dim;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::size_t id, Search& s) const {
    const Node& node = nodes_[id];
    if (node.dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t src = points_[i].source;
        if (src == s.exclude) continue;
        const double dot = abs_quaternion_dot(s.query, rotations_[src]);
        if (dot > s.best_dot || (dot == s.best_dot && src < s.best)) {
          s.best_dot = dot;
          s.best = src;
        }
      }
      return;
    }
    const double diff = s.q[node.dim] - node.split;
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    search(near, s);
    // Points on the split plane may sit in either child; the margin keeps
    // the pruning conservative so ties resolve exactly as in the scan.
    if (diff * diff <= 2.0 - 2.0 * s.best_dot + 1e-12) search(far, s);
  }

  void collect(std::size_t id, const std::array<double, 4>& q, const Rotation& r, double radius,
               double chord2, std::vector<std::size_t>& out) const {
    const Node& node = nodes_[id];
    if (node.dim < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t src = points_[i].source;
        if (geodesic_distance(r, rotations_[src]) <= radius) out.push_back(src);
      }
      return;
    }
    const double diff = q[node.dim] - node.split;
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    collect(near, q, r, radius, chord2, out);
    if (diff * diff <= chord2) collect(far, q, r, radius, chord2, out);
  }

  std::vector<Rotation> rotations_;
  std::vector<Point> points_;
  std::vector<Node> nodes_;
};

}  // namespace ipdf
