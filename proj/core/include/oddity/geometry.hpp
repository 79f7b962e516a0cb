#pragma once

#include <array>
#include <variant>
#include <vector>

#include "oddity/error.hpp"

namespace oddity {

struct Vec2 {
  double x = 0, y = 0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const;
  Vec2 normalized() const;
  Vec2 perp() const { return {-y, x}; }
};

double distance(Vec2 a, Vec2 b);
/// Distance from p to the closed segment [a,b].
double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);
/// Signed area of a polygon (positive for counter-clockwise vertex order).
double signed_area(const std::vector<Vec2>& pts);
/// Angle between two direction vectors in [0, pi/2] (orientation-free:
/// parallel and anti-parallel both measure 0).
double line_angle_between(Vec2 u, Vec2 v);

// ---- shapes -----------------------------------------------------------------

/// All coordinates are normalized to [0,1]^2 of the frame; sizes (radii,
/// stroke thickness) are fractions of the frame size.
struct PointShape {
  Vec2 p;
  double radius = 0.02;
};
struct SegmentShape {
  Vec2 a, b;
  double thickness = 0.02;
};
struct PolylineShape {
  std::vector<Vec2> pts;
  double thickness = 0.02;
  bool closed = false;
};
struct PolygonShape {
  std::vector<Vec2> pts;
  double thickness = 0.02;
  bool filled = false;
};
struct CircleShape {
  Vec2 center;
  double r = 0.1;
  double thickness = 0.02;
  bool filled = false;
};
struct ArcShape {
  Vec2 center;
  double r = 0.1;
  double a0 = 0, a1 = 3.14159;  // radians, counter-clockwise from a0 to a1
  double thickness = 0.02;
};

using Shape = std::variant<PointShape, SegmentShape, PolylineShape,
                           PolygonShape, CircleShape, ArcShape>;

// ---- affine transforms --------------------------------------------------------

/// Row-major 3x3 affine matrix acting on homogeneous [x y 1] columns.
class Transform2D {
 public:
  Transform2D();  // identity

  static Transform2D identity();
  static Transform2D translation(Vec2 d);
  static Transform2D rotation(double radians, Vec2 center = {0, 0});
  static Transform2D scaling(double sx, double sy, Vec2 center = {0, 0});
  /// Reflection across the line through `p` with direction `dir`.
  static Transform2D reflection(Vec2 p, Vec2 dir);

  /// this ∘ other (apply `other` first).
  Transform2D compose(const Transform2D& other) const;
  Vec2 apply(Vec2 p) const;
  double det() const;
  bool invertible() const;
  Transform2D inverse() const;

  const std::array<double, 9>& m() const { return m_; }

 private:
  std::array<double, 9> m_;
};

/// Exact affine image of the control points. Throws ValueError on a
/// singular transform.
std::vector<Vec2> apply_transform(const std::vector<Vec2>& pts,
                                  const Transform2D& t);
Shape transform_shape(const Shape& s, const Transform2D& t);

}  // namespace oddity
