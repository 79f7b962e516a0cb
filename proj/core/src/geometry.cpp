#include "oddity/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace oddity {

double Vec2::norm() const { return std::hypot(x, y); }

Vec2 Vec2::normalized() const {
  double n = norm();
  if (n == 0) throw ValueError("cannot normalize a zero vector");
  return {x / n, y / n};
}

double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 == 0) return distance(p, a);
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t);
}

double signed_area(const std::vector<Vec2>& pts) {
  double acc = 0;
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = pts[i];
    const Vec2& b = pts[(i + 1) % n];
    acc += a.cross(b);
  }
  return acc / 2.0;
}

double line_angle_between(Vec2 u, Vec2 v) {
  const double nu = u.norm(), nv = v.norm();
  if (nu == 0 || nv == 0) throw ValueError("angle of a zero direction");
  double c = std::abs(u.dot(v)) / (nu * nv);
  c = std::clamp(c, 0.0, 1.0);
  return std::acos(c);
}

// ---- Transform2D ---------------------------------------------------------

Transform2D::Transform2D() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}

Transform2D Transform2D::identity() { return Transform2D(); }

Transform2D Transform2D::translation(Vec2 d) {
  Transform2D t;
  t.m_ = {1, 0, d.x, 0, 1, d.y, 0, 0, 1};
  return t;
}

Transform2D Transform2D::rotation(double radians, Vec2 center) {
  const double c = std::cos(radians), s = std::sin(radians);
  Transform2D t;
  t.m_ = {c, -s, center.x - c * center.x + s * center.y,
          s, c,  center.y - s * center.x - c * center.y,
          0, 0,  1};
  return t;
}

Transform2D Transform2D::scaling(double sx, double sy, Vec2 center) {
  Transform2D t;
  t.m_ = {sx, 0, center.x * (1 - sx), 0, sy, center.y * (1 - sy), 0, 0, 1};
  return t;
}

Transform2D Transform2D::reflection(Vec2 p, Vec2 dir) {
  const Vec2 d = dir.normalized();
  // Householder on the normal component, shifted to pass through p.
  const double a = d.x * d.x - d.y * d.y;
  const double b = 2 * d.x * d.y;
  Transform2D lin;
  lin.m_ = {a, b, 0, b, -a, 0, 0, 0, 1};
  return Transform2D::translation(p).compose(lin).compose(
      Transform2D::translation({-p.x, -p.y}));
}

Transform2D Transform2D::compose(const Transform2D& o) const {
  Transform2D r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int k = 0; k < 3; ++k)
        acc += m_[static_cast<size_t>(3 * i + k)] *
               o.m_[static_cast<size_t>(3 * k + j)];
      r.m_[static_cast<size_t>(3 * i + j)] = acc;
    }
  return r;
}

Vec2 Transform2D::apply(Vec2 p) const {
  return {m_[0] * p.x + m_[1] * p.y + m_[2],
          m_[3] * p.x + m_[4] * p.y + m_[5]};
}

double Transform2D::det() const { return m_[0] * m_[4] - m_[1] * m_[3]; }

bool Transform2D::invertible() const { return std::abs(det()) > 1e-12; }

Transform2D Transform2D::inverse() const {
  if (!invertible()) throw ValueError("Transform2D: singular matrix");
  const double d = det();
  Transform2D r;
  r.m_ = {m_[4] / d,  -m_[1] / d, (m_[1] * m_[5] - m_[2] * m_[4]) / d,
          -m_[3] / d, m_[0] / d,  (m_[2] * m_[3] - m_[0] * m_[5]) / d,
          0,          0,          1};
  return r;
}

std::vector<Vec2> apply_transform(const std::vector<Vec2>& pts,
                                  const Transform2D& t) {
  if (!t.invertible())
    throw ValueError("apply_transform: singular transform");
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) out.push_back(t.apply(p));
  return out;
}

Shape transform_shape(const Shape& s, const Transform2D& t) {
  if (!t.invertible())
    throw ValueError("transform_shape: singular transform");
  Shape out = s;
  std::visit(
      [&](auto& sh) {
        using S = std::decay_t<decltype(sh)>;
        if constexpr (std::is_same_v<S, PointShape>) {
          sh.p = t.apply(sh.p);
        } else if constexpr (std::is_same_v<S, SegmentShape>) {
          sh.a = t.apply(sh.a);
          sh.b = t.apply(sh.b);
        } else if constexpr (std::is_same_v<S, PolylineShape> ||
                             std::is_same_v<S, PolygonShape>) {
          for (auto& p : sh.pts) p = t.apply(p);
        } else if constexpr (std::is_same_v<S, CircleShape>) {
          sh.center = t.apply(sh.center);
        } else if constexpr (std::is_same_v<S, ArcShape>) {
          sh.center = t.apply(sh.center);
        }
      },
      out);
  return out;
}

}  // namespace oddity
