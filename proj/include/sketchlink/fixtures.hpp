#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "sketchlink/workbench.hpp"

// Synthetic sketches of reference mechanisms. Every scene is drawn as ink
// bars that stop short of the joints (so proximity grouping keeps links
// apart) plus circle / line gestures, and then goes through the ordinary
// recognize -> mark -> build pipeline.

namespace sketchlink::fixtures {

struct Fixture {
  SketchDocument doc;
  std::map<std::string, EntityId> ids;  // named links / joints

  EntityId id(const std::string& name) const { return ids.at(name); }
  const MechanismState& mechanism() const { return *doc.state().mechanism; }
  const Mechanism& instance(std::size_t i = 0) const { return mechanism().instances.at(i); }
};

inline constexpr double kGap = 0.45;           // bar ends stop this far from a joint
inline constexpr double kGestureRadius = 0.7;  // hinge circle radius
inline constexpr double kSampleSpacing = 0.1;

class SceneBuilder {
 public:
  /// Polyline through `pts`, densified to kSampleSpacing.
  EntityId ink(const std::vector<Point2>& pts) { return doc_.add_stroke(sampled(pts), StrokeMode::Ink); }

  /// Straight bar from p to q with `gap` trimmed from both ends.
  EntityId bar(Point2 p, Point2 q, double gap = kGap) {
    const Point2 u = (q - p) / distance(p, q);
    return ink({p + gap * u, q - gap * u});
  }

  /// Ground with pivots raised on legs above a base line at `base_y`.
  EntityId ground(const std::vector<Point2>& pivots, double base_y) {
    std::vector<Point2> pts;
    pts.push_back(pivots.front() - Point2{0, kGap});
    pts.push_back({pivots.front().x, base_y});
    for (std::size_t i = 1; i < pivots.size(); ++i) {
      pts.push_back({pivots[i].x, base_y});
      pts.push_back(pivots[i] - Point2{0, kGap});
      if (i + 1 < pivots.size()) pts.push_back({pivots[i].x, base_y});
    }
    return ink(pts);
  }

  EntityId circle_gesture(Point2 c, double r = kGestureRadius, int n = 64) {
    std::vector<TimedPoint> s;
    for (int k = 0; k < n; ++k) {
      const double a = 2.0 * std::numbers::pi * k / n;
      s.push_back({c + r * Point2{std::cos(a), std::sin(a)}, next_t()});
    }
    return doc_.add_stroke(s, StrokeMode::Gesture);
  }

  EntityId line_gesture(Point2 a, Point2 b) { return doc_.add_stroke(sampled({a, b}), StrokeMode::Gesture); }

  SketchDocument& doc() { return doc_; }

 private:
  double next_t() { return t_ += 10.0; }

  std::vector<TimedPoint> sampled(const std::vector<Point2>& pts) {
    std::vector<TimedPoint> s;
    s.push_back({pts.front(), next_t()});
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double len = distance(pts[i - 1], pts[i]);
      const int n = std::max(1, static_cast<int>(std::ceil(len / kSampleSpacing)));
      for (int k = 1; k <= n; ++k) s.push_back({pts[i - 1] + (static_cast<double>(k) / n) * (pts[i] - pts[i - 1]), next_t()});
    }
    return s;
  }

  SketchDocument doc_;
  double t_ = 0.0;
};

/// Upper (left-turn) intersection of circle(a, ra) and circle(c, rc): the
/// solution B with cross(c - a, B - a) > 0 when `upper`.
inline Point2 circle_intersection(Point2 a, double ra, Point2 c, double rc, bool upper = true) {
  const double d = distance(a, c);
  const double x = (d * d + ra * ra - rc * rc) / (2.0 * d);
  const double h = std::sqrt(std::max(0.0, ra * ra - x * x));
  const Point2 u = (c - a) / d;
  return a + x * u + (upper ? h : -h) * perp(u);
}

struct FourBarGeometry {
  Point2 o, a, b, c;  // ground pivot O, crank pin A, coupler-rocker pin B, ground pivot C
};

inline FourBarGeometry four_bar_geometry(Point2 o, Point2 c, double crank, double coupler, double rocker,
                                         double crank_angle) {
  const Point2 a = o + crank * Point2{std::cos(crank_angle), std::sin(crank_angle)};
  return {o, a, circle_intersection(a, coupler, c, rocker), c};
}

/// Draws a four-bar and its four hinge gestures; names are prefixed.
inline void draw_four_bar(SceneBuilder& sb, Fixture& f, const FourBarGeometry& g, const std::string& prefix = "") {
  const double base = std::min(g.o.y, g.c.y) - 1.2;
  f.ids[prefix + "ground"] = sb.ground({g.o, g.c}, base);
  f.ids[prefix + "crank"] = sb.bar(g.o, g.a);
  f.ids[prefix + "coupler"] = sb.bar(g.a, g.b);
  f.ids[prefix + "rocker"] = sb.bar(g.b, g.c);
  f.ids[prefix + "joint_o"] = sb.circle_gesture(g.o);
  f.ids[prefix + "joint_a"] = sb.circle_gesture(g.a);
  f.ids[prefix + "joint_b"] = sb.circle_gesture(g.b);
  f.ids[prefix + "joint_c"] = sb.circle_gesture(g.c);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::logic_error("fixture construction failed: " + what);
}

/// Recognize, ground, select inputs and build. Verifies the expected counts.
inline void finish(Fixture& f, const std::vector<std::string>& grounds, const std::map<std::string, double>& drivers,
                   std::size_t links, std::size_t joints) {
  const auto diags = recognize(f.doc);
  const auto& plan = f.doc.state().mechanism->plan;
  require(plan.links.size() == links, std::to_string(plan.links.size()) + " links recognized");
  require(plan.joints.size() == joints, std::to_string(plan.joints.size()) + " joints recognized");
  for (const auto& g : grounds) mark_ground(f.doc, f.id(g));
  for (const auto& [j, rate] : drivers) set_driver(f.doc, f.id(j), rate);
  build(f.doc);
}

inline void track_world(Fixture& f, const std::string& link, Point2 world) {
  const auto* l = f.mechanism().find_built_link(f.id(link));
  trace_point(f.doc, f.id(link), l->pose.inverse_apply(world));
}

// ---------------------------------------------------------------------------

/// FB1: O=(0,0), C=(8,0), crank 2, coupler 6, rocker 5, built at crank
/// angle 0 on the upper branch; crank driven at +1 rad/s; coupler midpoint
/// tracked.
inline Fixture fb1() {
  Fixture f;
  SceneBuilder sb;
  const auto g = four_bar_geometry({0, 0}, {8, 0}, 2, 6, 5, 0.0);
  draw_four_bar(sb, f, g);
  f.doc = std::move(sb.doc());
  finish(f, {"ground"}, {{"joint_o", 1.0}}, 4, 4);
  track_world(f, "coupler", 0.5 * (g.a + g.b));
  return f;
}

/// SC1: crank r=1 about O, rod l=3, slider pin on the x-axis, built at crank
/// angle 90 degrees. The slider block rides a rail below the axis.
inline Fixture sc1() {
  Fixture f;
  SceneBuilder sb;
  const Point2 o{0, 0}, a{0, 1}, b{std::sqrt(8.0), 0};
  // The crank is short, so this scene uses tighter gaps and hinge circles.
  f.ids["ground"] = sb.ink({{0, -0.25}, {0, -1.0}, {5, -1.0}});
  f.ids["crank"] = sb.bar(o, a, 0.25);
  f.ids["rod"] = sb.bar(a, b, 0.25);
  f.ids["slider"] = sb.ink({{b.x - 0.4, -0.3}, {b.x + 0.4, -0.3}, {b.x + 0.4, -0.8}, {b.x - 0.4, -0.8}, {b.x - 0.4, -0.3}});
  f.ids["joint_o"] = sb.circle_gesture(o, 0.4);
  f.ids["joint_a"] = sb.circle_gesture(a, 0.4);
  f.ids["joint_b"] = sb.circle_gesture(b, 0.6);
  f.ids["slide"] = sb.line_gesture({b.x - 0.6, -0.9}, {b.x + 0.6, -0.9});
  f.doc = std::move(sb.doc());
  finish(f, {"ground"}, {{"joint_o", 1.0}}, 4, 4);
  track_world(f, "slider", b);
  return f;
}

inline constexpr double kPg1BuildAngle = 62.5 * std::numbers::pi / 180.0;

/// PG1: parallelogram 2/6/2/6 with the long side grounded. Built off the
/// integer-degree grid so one-degree steps never land on the folded
/// (singular) configurations.
inline Fixture pg1() {
  Fixture f;
  SceneBuilder sb;
  const Point2 o{0, 0}, c{6, 0};
  const Point2 a = 2.0 * Point2{std::cos(kPg1BuildAngle), std::sin(kPg1BuildAngle)};
  const Point2 b = a + Point2{6, 0};
  f.ids["ground"] = sb.ground({o, c}, -1.2);
  f.ids["crank"] = sb.bar(o, a);
  f.ids["coupler"] = sb.bar(a, b);
  f.ids["rocker"] = sb.bar(b, c);
  f.ids["joint_o"] = sb.circle_gesture(o);
  f.ids["joint_a"] = sb.circle_gesture(a);
  f.ids["joint_b"] = sb.circle_gesture(b);
  f.ids["joint_c"] = sb.circle_gesture(c);
  f.doc = std::move(sb.doc());
  finish(f, {"ground"}, {{"joint_o", 1.0}}, 4, 4);
  track_world(f, "coupler", 0.5 * (a + b));
  return f;
}

/// Three bars pinned into a triangle: a structure with mobility 0.
inline Fixture triangle() {
  Fixture f;
  SceneBuilder sb;
  const Point2 p0{0, 0}, p1{4, 0}, p2{2, 3};
  f.ids["ground"] = sb.bar(p0, p1);
  f.ids["left"] = sb.bar(p0, p2);
  f.ids["right"] = sb.bar(p1, p2);
  f.ids["joint_0"] = sb.circle_gesture(p0);
  f.ids["joint_1"] = sb.circle_gesture(p1);
  f.ids["joint_2"] = sb.circle_gesture(p2);
  f.doc = std::move(sb.doc());
  finish(f, {"ground"}, {{"joint_0", 1.0}}, 3, 3);
  return f;
}

inline constexpr double kNonGrashofBuildAngle = std::numbers::pi / 3.0;

/// Non-Grashof four-bar (input 3, coupler 4, follower 3, ground 5) driven at
/// the input rocker from 60 degrees, counter-clockwise. The input cannot pass
/// the angle where coupler and follower straighten (|A - C| = 7).
inline Fixture non_grashof() {
  Fixture f;
  SceneBuilder sb;
  const auto g = four_bar_geometry({0, 0}, {5, 0}, 3, 4, 3, kNonGrashofBuildAngle);
  draw_four_bar(sb, f, g);
  f.doc = std::move(sb.doc());
  finish(f, {"ground"}, {{"joint_o", 1.0}}, 4, 4);
  track_world(f, "coupler", 0.5 * (g.a + g.b));
  return f;
}

/// Drum-beating pedal traced over a reference image: crank-rocker with a
/// beater head drawn as a decoration on the rocker, whose tip is tracked.
inline Fixture drum_pedal() {
  Fixture f;
  SceneBuilder sb;
  const auto g = four_bar_geometry({0, 0}, {7, 0}, 1.5, 6.5, 4, std::numbers::pi / 2.0);
  draw_four_bar(sb, f, g);
  f.doc = std::move(sb.doc());
  f.doc.set_underlay({0, "drum_pedal.png", {-1, -2}, 0.01, 0.0});
  finish(f, {"ground"}, {{"joint_o", -1.0}}, 4, 4);
  const Point2 head = g.b + 1.5 * (g.b - g.c) / distance(g.b, g.c);
  std::vector<TimedPoint> ring;
  for (int k = 0; k <= 24; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 24;
    ring.push_back({head + 0.4 * Point2{std::cos(a), std::sin(a)}, 10.0 * k});
  }
  f.ids["beater"] = f.doc.attach_decoration(f.id("rocker"), {ring});
  track_world(f, "rocker", head);
  return f;
}

/// Two independent copies of FB1 side by side, each grounded and driven.
inline Fixture two_four_bars() {
  Fixture f;
  SceneBuilder sb;
  const auto g1 = four_bar_geometry({0, 0}, {8, 0}, 2, 6, 5, 0.0);
  const auto g2 = four_bar_geometry({12, 0}, {20, 0}, 2, 6, 5, 0.0);
  draw_four_bar(sb, f, g1, "left_");
  draw_four_bar(sb, f, g2, "right_");
  f.doc = std::move(sb.doc());
  finish(f, {"left_ground", "right_ground"}, {{"left_joint_o", 1.0}, {"right_joint_o", -1.0}}, 8, 8);
  return f;
}

/// Five-bar: two grounded cranks joined by two couplers. Mobility 2; only
/// the left crank is driven.
inline Fixture five_bar() {
  Fixture f;
  SceneBuilder sb;
  const Point2 o{0, 0}, e{6, 0}, a{0, 2}, d{6, 2}, b{3, 4.5};
  f.ids["ground"] = sb.ground({o, e}, -1.2);
  f.ids["left"] = sb.bar(o, a);
  f.ids["coupler_l"] = sb.bar(a, b);
  f.ids["coupler_r"] = sb.bar(b, d);
  f.ids["right"] = sb.bar(d, e);
  f.ids["joint_o"] = sb.circle_gesture(o);
  f.ids["joint_a"] = sb.circle_gesture(a);
  f.ids["joint_b"] = sb.circle_gesture(b);
  f.ids["joint_d"] = sb.circle_gesture(d);
  f.ids["joint_e"] = sb.circle_gesture(e);
  f.doc = std::move(sb.doc());
  finish(f, {"ground"}, {{"joint_o", 1.0}}, 5, 5);
  return f;
}

/// Named fixtures shipped as files.
inline std::map<std::string, Fixture (*)()> catalog() {
  return {{"fb1", &fb1},          {"sc1", &sc1},
          {"pg1", &pg1},          {"triangle", &triangle},
          {"non_grashof", &non_grashof}, {"drum_pedal", &drum_pedal},
          {"two_four_bars", &two_four_bars}, {"five_bar", &five_bar}};
}

}  // namespace sketchlink::fixtures
