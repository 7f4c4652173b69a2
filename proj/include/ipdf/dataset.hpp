#pragma once

#include <Eigen/Dense>

#include <string>

#include "ipdf/errors.hpp"
#include "ipdf/rotation.hpp"

namespace ipdf {

enum class ShapeKind { tetrahedron, cube, icosahedron, cone, cylinder, sphereX };

inline const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::tetrahedron: return "tetrahedron";
    case ShapeKind::cube: return "cube";
    case ShapeKind::icosahedron: return "icosahedron";
    case ShapeKind::cone: return "cone";
    case ShapeKind::cylinder: return "cylinder";
    case ShapeKind::sphereX: return "sphereX";
  }
  return "cube";
}

inline ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "tetrahedron" || s == "tet") return ShapeKind::tetrahedron;
  if (s == "cube") return ShapeKind::cube;
  if (s == "icosahedron" || s == "ico") return ShapeKind::icosahedron;
  if (s == "cone") return ShapeKind::cone;
  if (s == "cylinder" || s == "cyl") return ShapeKind::cylinder;
  if (s == "sphereX" || s == "spherex") return ShapeKind::sphereX;
  throw Error("unknown shape kind \"" + s + "\"");
}

inline bool is_discrete(ShapeKind kind) {
  return kind == ShapeKind::tetrahedron || kind == ShapeKind::cube || kind == ShapeKind::icosahedron;
}

// One training/evaluation example: an input descriptor and the single
// annotated pose.
struct DatasetRecord {
  Eigen::VectorXd descriptor;
  Rotation gt_rotation;
  ShapeKind kind = ShapeKind::cube;
};

}  // namespace ipdf
