#pragma once

// Independent oracles and generators shared by the unit tests and the
// acceptance binary. Nothing here calls the solver.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sketchlink/fixtures.hpp"

namespace support {

using sketchlink::Point2;
using json = nlohmann::json;

constexpr double kPi = std::numbers::pi;

inline double deg(double d) { return d * kPi / 180.0; }

/// Pin B of a four-bar from the crank angle by circle-circle intersection,
/// on the branch left of the directed line A -> C.
inline Point2 four_bar_pin(Point2 o, Point2 c, double crank, double coupler, double rocker, double phi) {
  const double ax = o.x + crank * std::cos(phi), ay = o.y + crank * std::sin(phi);
  const double dx = c.x - ax, dy = c.y - ay;
  const double d = std::sqrt(dx * dx + dy * dy);
  const double x = (d * d + coupler * coupler - rocker * rocker) / (2.0 * d);
  const double h = std::sqrt(coupler * coupler - x * x);
  return {ax + (x * dx - h * dy) / d, ay + (x * dy + h * dx) / d};
}

/// Slider position of an in-line slider-crank.
inline double slider_x(double r, double l, double theta) {
  return r * std::cos(theta) + std::sqrt(l * l - r * r * std::sin(theta) * std::sin(theta));
}

/// Input angle at which coupler and follower of a four-bar straighten:
/// |A - C| = coupler + follower, with A on the input circle about O and C on
/// the x-axis at distance `ground`. Law of cosines.
inline double extension_limit(double input, double coupler, double follower, double ground) {
  const double reach = coupler + follower;
  return std::acos((input * input + ground * ground - reach * reach) / (2.0 * input * ground));
}

// ---------------------------------------------------------------------------
// Gesture corpus

enum class Shape { Circle, Line, Arc, Scribble, Zigzag };

inline const char* to_string(Shape s) {
  switch (s) {
    case Shape::Circle: return "circle";
    case Shape::Line: return "line";
    case Shape::Arc: return "arc";
    case Shape::Scribble: return "scribble";
    default: return "zigzag";
  }
}

struct CorpusItem {
  Shape shape;
  double noise;  // fraction of the shape size
  Point2 center;
  double radius;  // circles and arcs
  std::vector<Point2> points;
};

/// 200 gestures: 60 circles, 60 lines, 40 partial arcs (90..180 degrees),
/// 20 random-walk scribbles and 20 dense zigzag scribbles. Noise is uniform in [0, 2%] of the shape's size, with the
/// first five of each kind noise-free.
inline std::vector<CorpusItem> gesture_corpus(std::uint64_t seed = 20261016) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<CorpusItem> out;
  auto jitter = [&](std::vector<Point2>& pts, double amp) {
    for (auto& p : pts) {
      const double a = u(0, 2 * kPi), m = amp * unit(rng);
      p.x += m * std::cos(a);
      p.y += m * std::sin(a);
    }
  };
  auto noise_for = [&](int i) { return i < 5 ? 0.0 : u(0.0, 0.02); };

  for (int i = 0; i < 60; ++i) {
    CorpusItem c{Shape::Circle, noise_for(i), {u(-50, 50), u(-50, 50)}, u(0.2, 20.0), {}};
    const int n = 16 + static_cast<int>(u(0, 80));
    const double start = u(0, 2 * kPi);
    for (int k = 0; k < n; ++k) {
      const double a = start + 2 * kPi * k / n;
      c.points.push_back({c.center.x + c.radius * std::cos(a), c.center.y + c.radius * std::sin(a)});
    }
    jitter(c.points, c.noise * 2 * c.radius);
    out.push_back(std::move(c));
  }
  for (int i = 0; i < 60; ++i) {
    CorpusItem c{Shape::Line, noise_for(i), {u(-50, 50), u(-50, 50)}, 0.0, {}};
    const double len = u(0.5, 40.0), a = u(0, 2 * kPi);
    const int n = 2 + static_cast<int>(u(0, 60));
    for (int k = 0; k < n; ++k) {
      const double s = len * (static_cast<double>(k) / (n - 1) - 0.5);
      c.points.push_back({c.center.x + s * std::cos(a), c.center.y + s * std::sin(a)});
    }
    if (n > 2) jitter(c.points, c.noise * len);
    out.push_back(std::move(c));
  }
  for (int i = 0; i < 40; ++i) {
    CorpusItem c{Shape::Arc, noise_for(i), {u(-50, 50), u(-50, 50)}, u(0.5, 20.0), {}};
    const double span = deg(u(90, 180)), start = u(0, 2 * kPi);
    const int n = 16 + static_cast<int>(u(0, 40));
    for (int k = 0; k < n; ++k) {
      const double a = start + span * k / (n - 1);
      c.points.push_back({c.center.x + c.radius * std::cos(a), c.center.y + c.radius * std::sin(a)});
    }
    jitter(c.points, c.noise * 2 * c.radius);
    out.push_back(std::move(c));
  }
  for (int i = 0; i < 20; ++i) {
    // Random walk with smoothly drifting heading.
    CorpusItem c{Shape::Scribble, noise_for(i), {u(-50, 50), u(-50, 50)}, 0.0, {}};
    const double size = u(1.0, 20.0);
    const int n = 20 + static_cast<int>(u(0, 40));
    double heading = u(0, 2 * kPi);
    Point2 p = c.center;
    for (int k = 0; k < n; ++k) {
      c.points.push_back(p);
      heading += u(-1.2, 1.2);
      p = p + (size / n) * Point2{std::cos(heading), std::sin(heading)};
    }
    jitter(c.points, c.noise * size);
    out.push_back(std::move(c));
  }
  for (int i = 0; i < 20; ++i) {
    // Back-and-forth zigzag: heavy reversals, open ends.
    CorpusItem c{Shape::Zigzag, noise_for(i), {u(-50, 50), u(-50, 50)}, 0.0, {}};
    const double size = u(1.0, 20.0), a = u(0, 2 * kPi);
    const int n = 8 + static_cast<int>(u(0, 20));
    for (int k = 0; k < n; ++k) {
      const double along = size * (static_cast<double>(k) / (n - 1) - 0.5);
      const double across = (k % 2 ? 0.5 : -0.5) * size * u(0.6, 1.0);
      c.points.push_back({c.center.x + along * std::cos(a) - across * std::sin(a),
                          c.center.y + along * std::sin(a) + across * std::cos(a)});
    }
    jitter(c.points, c.noise * size);
    out.push_back(std::move(c));
  }
  return out;
}

inline sketchlink::Stroke gesture_stroke(const std::vector<Point2>& pts, sketchlink::EntityId id = 1) {
  std::vector<sketchlink::TimedPoint> s;
  for (std::size_t i = 0; i < pts.size(); ++i) s.push_back({pts[i], 10.0 * static_cast<double>(i)});
  auto st = sketchlink::make_stroke(s, sketchlink::StrokeMode::Gesture);
  st.id = id;
  return st;
}

// ---------------------------------------------------------------------------
// Protocol scripts

inline json stroke_args(const sketchlink::Stroke& s) {
  json pts = json::array();
  for (auto p : s.points) pts.push_back({p.x, p.y});
  return {{"mode", sketchlink::to_string(s.mode)}, {"stroke", {{"points", pts}, {"t", s.timestamps}}}};
}

inline json command(std::int64_t seq, const std::string& session, const std::string& cmd, json args = json::object()) {
  return {{"seq", seq}, {"session", session}, {"command", cmd}, {"args", std::move(args)}};
}

/// A 50-command editing and simulation script over the FB1 sketch: draw,
/// undo/redo, recognize, mark, build, trace, run, scrub, drag a joint,
/// re-run, plus a few commands that are rejected.
inline std::vector<json> fb1_script(const std::string& sid) {
  const auto f = sketchlink::fixtures::fb1();
  const auto& st = f.doc.state();
  std::vector<json> cmds;
  std::int64_t seq = 100;
  auto add = [&](const std::string& c, json a = json::object()) { cmds.push_back(command(seq++, sid, c, std::move(a))); };
  for (const auto& s : st.strokes) add("add_stroke", stroke_args(s));           // 8 (ids 1..8)
  add("add_stroke", {{"mode", "ink"}, {"stroke", {{"points", {{0, 0}}}}}});     // rejected
  add("add_stroke", stroke_args(st.strokes[0]));                                // duplicate ink, id 9
  add("undo");
  add("redo");
  add("undo");
  add("set_underlay", {{"image", "fb1.png"}, {"position", {-1, -2}}, {"scale", 0.02}});
  add("recognize");
  add("mark_ground", {{"link", f.id("ground")}});
  add("select_input", {{"joint", f.id("joint_c")}});
  add("select_input", {{"joint", f.id("joint_c")}, {"selected", false}});
  add("set_driver", {{"joint", f.id("joint_o")}, {"rate", 1.0}});
  add("run");                                                                   // rejected: not built
  add("build");
  add("trace_point", {{"link", f.id("coupler")}, {"world", {4.9583333333333, 2.27265}}});
  add("trace_point", {{"link", f.id("crank")}, {"local", {2.0, 0.0}}});
  add("run", {{"duration", 0.5}});
  add("snapshot");
  add("pause");
  add("scrub", {{"target", 1.2}});
  add("scrub", {{"target", 0.4}});
  add("move_joint", {{"joint", f.id("joint_b")}, {"to", {6.4, 4.5}}, {"side", f.id("rocker")}});
  add("run", {{"duration", 0.25}, {"rate", -2.0}});
  add("pause", {{"instance", f.id("ground")}});
  add("clear_trace");
  add("undo");
  add("run", {{"cycles", 1}});
  add("export_trace", {{"format", "csv"}});
  add("undo");
  add("redo");
  add("attach_decoration", {{"link", f.id("rocker")}, {"strokes", {{{"points", {{7, 3}, {7.5, 3.5}, {8, 3}}}}}}});
  add("mark_ground", {{"link", 424242}});                                       // rejected
  add("trace_point", {{"link", f.id("rocker")}, {"local", {8.0, 0.0}}});
  add("run", {{"duration", 0.3}, {"dt", 0.01}});
  add("scrub", {{"target", 3.0}});
  add("recognize", {{"epsilon", 0.2}});
  add("build");
  add("run", {{"duration", 0.2}});
  add("bogus_command");                                                         // rejected
  add("save");
  add("undo");
  add("redo");
  add("run", {{"duration", 0.1}});
  return cmds;
}

}  // namespace support
