#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace sketchlink {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point2 operator-(Point2 a) { return {-a.x, -a.y}; }
  friend constexpr Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr Point2 operator/(Point2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Point2, Point2) = default;

  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

constexpr double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
/// Counter-clockwise quarter turn.
constexpr Point2 perp(Point2 a) { return {-a.y, a.x}; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

inline Point2 rotate(Point2 p, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

/// Maps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

/// Planar rigid placement: world = R(theta) * local + (x, y).
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Point2 apply(Point2 local) const { return rotate(local, theta) + Point2{x, y}; }
  Point2 apply_direction(Point2 local) const { return rotate(local, theta); }
  Point2 inverse_apply(Point2 world) const { return rotate(world - Point2{x, y}, -theta); }
  Point2 inverse_direction(Point2 world) const { return rotate(world, -theta); }

  friend bool operator==(const Pose&, const Pose&) = default;
};

struct Box {
  Point2 min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point2 max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  bool empty() const { return min.x > max.x; }
  void add(Point2 p) {
    min = {std::min(min.x, p.x), std::min(min.y, p.y)};
    max = {std::max(max.x, p.x), std::max(max.y, p.y)};
  }
  void add(const Box& b) {
    if (b.empty()) return;
    add(b.min);
    add(b.max);
  }
  double diagonal() const { return empty() ? 0.0 : distance(min, max); }
};

inline Box bounds(std::span<const Point2> pts) {
  Box b;
  for (auto p : pts) b.add(p);
  return b;
}

inline double path_length(std::span<const Point2> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

inline Point2 mean_point(std::span<const Point2> pts) {
  Point2 sum{};
  for (auto p : pts) sum = sum + p;
  return sum / static_cast<double>(pts.size());
}

inline double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

inline bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline double segment_distance(Point2 a, Point2 b, Point2 c, Point2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

/// Minimum distance between two polylines (single points count as degenerate polylines).
inline double polyline_distance(std::span<const Point2> p, std::span<const Point2> q) {
  if (p.empty() || q.empty()) return std::numeric_limits<double>::infinity();
  if (p.size() == 1 && q.size() == 1) return distance(p[0], q[0]);
  double best = std::numeric_limits<double>::infinity();
  const std::size_t np = std::max<std::size_t>(p.size() - 1, 1);
  const std::size_t nq = std::max<std::size_t>(q.size() - 1, 1);
  for (std::size_t i = 0; i < np; ++i) {
    const Point2 a = p[i];
    const Point2 b = p[std::min(i + 1, p.size() - 1)];
    for (std::size_t j = 0; j < nq; ++j) {
      const Point2 c = q[j];
      const Point2 d = q[std::min(j + 1, q.size() - 1)];
      best = std::min(best, segment_distance(a, b, c, d));
      if (best == 0.0) return 0.0;
    }
  }
  return best;
}

/// Total least-squares line through a point set.
struct LineFit {
  Point2 point;      // centroid
  Point2 direction;  // unit principal axis
  double max_deviation = 0.0;
};

inline LineFit fit_line(std::span<const Point2> pts) {
  const Point2 c = mean_point(pts);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto p : pts) {
    const Point2 d = p - c;
    sxx += d.x * d.x;
    sxy += d.x * d.y;
    syy += d.y * d.y;
  }
  // Principal axis angle of the 2x2 scatter matrix.
  const double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  Point2 dir{std::cos(angle), std::sin(angle)};
  dir = dir / norm(dir);
  if (!pts.empty() && dot(pts.back() - pts.front(), dir) < 0.0) dir = -dir;
  double dev = 0.0;
  for (auto p : pts) dev = std::max(dev, std::abs(cross(dir, p - c)));
  return {c, dir, dev};
}

}  // namespace sketchlink
