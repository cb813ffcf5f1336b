#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sketchlink/errors.hpp"
#include "sketchlink/geometry.hpp"
#include "sketchlink/sketch.hpp"
#include "sketchlink/union_find.hpp"

namespace sketchlink {

/// Classifier and grouping constants. Fixed defaults, overridable per call.
struct RecognitionConfig {
  double circle_closure_max = 0.30;    // endpoint gap / path length
  double circle_radial_cv_max = 0.25;  // stddev / mean of radii about the centroid
  double line_deviation_max = 0.05;    // max perpendicular deviation / path length
  double epsilon_fraction = 0.02;      // grouping tolerance / scene diagonal
};

/// Number of distinct link colors the UI cycles through.
inline constexpr std::size_t kPaletteSize = 12;

inline double default_epsilon(const Box& scene, const RecognitionConfig& cfg = {}) {
  const double d = scene.diagonal();
  return d > 0.0 ? cfg.epsilon_fraction * d : cfg.epsilon_fraction;
}

enum class GestureKind { Circle, Line, Unknown };

inline const char* to_string(GestureKind k) {
  switch (k) {
    case GestureKind::Circle: return "circle";
    case GestureKind::Line: return "line";
    default: return "unknown";
  }
}

struct GestureClass {
  GestureKind kind = GestureKind::Unknown;
  Point2 center;       // Circle: coordinate centroid. Line: centroid on the fit line.
  double radius = 0.0; // Circle only
  Point2 direction;    // Line only, unit norm

  // Raw classifier measurements, kept for diagnostics.
  double closure_ratio = 0.0;
  double radial_cv = 0.0;
  double line_deviation_ratio = 0.0;
};

struct LinkHypothesis {
  EntityId id = 0;                // lowest member stroke id
  std::vector<EntityId> strokes;  // ascending
  std::size_t color = 0;          // palette index

  friend bool operator==(const LinkHypothesis&, const LinkHypothesis&) = default;
};

enum class JointKind { Revolute, Prismatic };

inline const char* to_string(JointKind k) { return k == JointKind::Revolute ? "revolute" : "prismatic"; }

struct JointHypothesis {
  EntityId id = 0;  // source gesture stroke id
  JointKind kind = JointKind::Revolute;
  EntityId link_a = 0;  // link_a < link_b
  EntityId link_b = 0;
  Point2 anchor;
  Point2 direction;  // Prismatic only

  friend bool operator==(const JointHypothesis&, const JointHypothesis&) = default;
};

/// Partitions ink strokes into links: connected components of the relation
/// "polylines come within eps of each other". Gesture strokes are ignored.
inline std::vector<LinkHypothesis> group_links(std::span<const Stroke> strokes, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("grouping tolerance must be positive");
  std::vector<const Stroke*> ink;
  for (const auto& s : strokes)
    if (s.mode == StrokeMode::Ink) ink.push_back(&s);
  std::sort(ink.begin(), ink.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<Box> boxes;
  boxes.reserve(ink.size());
  for (auto* s : ink) boxes.push_back(bounds(s->points));

  UnionFind uf(ink.size());
  for (std::size_t i = 0; i < ink.size(); ++i) {
    for (std::size_t j = i + 1; j < ink.size(); ++j) {
      const Box& a = boxes[i];
      const Box& b = boxes[j];
      // Cheap reject on expanded bounding boxes.
      if (a.min.x - eps > b.max.x || b.min.x - eps > a.max.x || a.min.y - eps > b.max.y ||
          b.min.y - eps > a.max.y)
        continue;
      if (polyline_distance(ink[i]->points, ink[j]->points) <= eps) uf.unite(i, j);
    }
  }

  std::map<std::size_t, std::vector<EntityId>> groups;
  for (std::size_t i = 0; i < ink.size(); ++i) groups[uf.find(i)].push_back(ink[i]->id);

  std::vector<LinkHypothesis> out;
  for (auto& [root, ids] : groups) out.push_back({ids.front(), ids, 0});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].color = i % kPaletteSize;
  return out;
}

/// Circle test first (closure and radial spread), then line test (deviation
/// from the total least-squares line), otherwise Unknown.
inline GestureClass classify_gesture(const Stroke& stroke, const RecognitionConfig& cfg = {}) {
  if (stroke.mode != StrokeMode::Gesture) throw NotAGesture("stroke " + std::to_string(stroke.id) + " is ink");
  const auto& pts = stroke.points;
  GestureClass g;
  const double len = path_length(pts);
  if (!(len > 0.0) || pts.size() < 2) return g;

  g.closure_ratio = distance(pts.front(), pts.back()) / len;

  const Point2 c = mean_point(pts);
  double sum = 0.0, sum2 = 0.0;
  for (auto p : pts) {
    const double r = distance(p, c);
    sum += r;
    sum2 += r * r;
  }
  const double n = static_cast<double>(pts.size());
  const double mean_r = sum / n;
  const double var = std::max(0.0, sum2 / n - mean_r * mean_r);
  g.radial_cv = mean_r > 0.0 ? std::sqrt(var) / mean_r : std::numeric_limits<double>::infinity();

  const LineFit fit = fit_line(pts);
  g.line_deviation_ratio = fit.max_deviation / len;

  if (g.closure_ratio <= cfg.circle_closure_max && g.radial_cv <= cfg.circle_radial_cv_max &&
      mean_r > 0.0) {
    g.kind = GestureKind::Circle;
    g.center = c;
    g.radius = mean_r;
  } else if (g.line_deviation_ratio <= cfg.line_deviation_max) {
    g.kind = GestureKind::Line;
    g.center = fit.point;
    g.direction = fit.direction;
  }
  return g;
}

namespace detail {

inline std::map<EntityId, const Stroke*> index_strokes(std::span<const Stroke> strokes) {
  std::map<EntityId, const Stroke*> m;
  for (const auto& s : strokes) m[s.id] = &s;
  return m;
}

}  // namespace detail

/// Links whose ink passes within eps of the gesture polyline, ascending by id.
inline std::vector<EntityId> links_touching(const Stroke& gesture, std::span<const LinkHypothesis> links,
                                            std::span<const Stroke> strokes, double eps) {
  const auto by_id = detail::index_strokes(strokes);
  std::vector<EntityId> hit;
  for (const auto& link : links) {
    for (EntityId sid : link.strokes) {
      auto it = by_id.find(sid);
      if (it == by_id.end()) continue;
      if (polyline_distance(gesture.points, it->second->points) <= eps) {
        hit.push_back(link.id);
        break;
      }
    }
  }
  std::sort(hit.begin(), hit.end());
  return hit;
}

/// Turns a classified gesture into a joint between exactly two links. The
/// anchor is the plain coordinate mean of the gesture samples; for partial
/// arcs this is biased toward the arc and is left uncorrected.
inline JointHypothesis extract_joint(const GestureClass& gesture, const Stroke& stroke,
                                     std::span<const LinkHypothesis> links, std::span<const Stroke> strokes,
                                     double eps) {
  if (gesture.kind == GestureKind::Unknown) throw InvalidArgument("gesture was not recognized");
  const auto hit = links_touching(stroke, links, strokes, eps);
  if (hit.size() != 2) throw AmbiguousJoint(hit.size());
  JointHypothesis j;
  j.id = stroke.id;
  j.link_a = hit[0];
  j.link_b = hit[1];
  j.anchor = mean_point(stroke.points);
  if (gesture.kind == GestureKind::Circle) {
    j.kind = JointKind::Revolute;
  } else {
    j.kind = JointKind::Prismatic;
    j.direction = gesture.direction;
  }
  return j;
}

struct RecognitionWarning {
  EntityId stroke = 0;
  std::string error;  // error name, e.g. AmbiguousJoint
  std::string message;
};

struct RecognitionResult {
  std::vector<LinkHypothesis> links;
  std::vector<JointHypothesis> joints;
  std::vector<RecognitionWarning> warnings;
};

/// Full Build-tab pass: group ink into links, then turn every gesture stroke
/// into a joint. Failed gestures become warnings rather than errors.
inline RecognitionResult recognize(std::span<const Stroke> strokes, double eps, const RecognitionConfig& cfg = {}) {
  RecognitionResult r;
  r.links = group_links(strokes, eps);
  std::vector<const Stroke*> gestures;
  for (const auto& s : strokes)
    if (s.mode == StrokeMode::Gesture) gestures.push_back(&s);
  std::sort(gestures.begin(), gestures.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const Stroke* g : gestures) {
    const GestureClass cls = classify_gesture(*g, cfg);
    if (cls.kind == GestureKind::Unknown) {
      r.warnings.push_back({g->id, "UnrecognizedGesture", "gesture is neither circle nor line"});
      continue;
    }
    try {
      r.joints.push_back(extract_joint(cls, *g, r.links, strokes, eps));
    } catch (const Error& e) {
      r.warnings.push_back({g->id, e.name(), e.what()});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Build plan: hypotheses plus the designer's ground / input / driver marks.

struct BuildPlan {
  std::vector<LinkHypothesis> links;
  std::vector<JointHypothesis> joints;
  std::set<EntityId> ground;              // at most one per connected instance
  std::map<EntityId, double> drivers;     // input joint id -> signed rate

  friend bool operator==(const BuildPlan&, const BuildPlan&) = default;

  const LinkHypothesis* find_link(EntityId id) const {
    for (const auto& l : links)
      if (l.id == id) return &l;
    return nullptr;
  }
  const JointHypothesis* find_joint(EntityId id) const {
    for (const auto& j : joints)
      if (j.id == id) return &j;
    return nullptr;
  }

  /// Links reachable from `link` through joints (including itself).
  std::set<EntityId> component_of(EntityId link) const {
    std::set<EntityId> seen{link};
    std::vector<EntityId> todo{link};
    while (!todo.empty()) {
      const EntityId cur = todo.back();
      todo.pop_back();
      for (const auto& j : joints) {
        EntityId other = 0;
        if (j.link_a == cur) other = j.link_b;
        else if (j.link_b == cur) other = j.link_a;
        else continue;
        if (seen.insert(other).second) todo.push_back(other);
      }
    }
    return seen;
  }
};

inline constexpr double kDefaultDriverRate = 1.0;

/// Marks `link` as the fixed link of its instance; any other ground in the
/// same instance is cleared.
inline void mark_ground(BuildPlan& plan, EntityId link) {
  if (!plan.find_link(link)) throw UnknownEntity("no link " + std::to_string(link));
  for (EntityId other : plan.component_of(link)) plan.ground.erase(other);
  plan.ground.insert(link);
}

/// Blue-to-red marker transition for the UI.
struct MarkerChange {
  EntityId joint = 0;
  bool input = false;
};

inline void require_grounded_joint(const BuildPlan& plan, EntityId joint) {
  const auto* j = plan.find_joint(joint);
  if (!j) throw UnknownEntity("no joint " + std::to_string(joint));
  for (EntityId l : plan.component_of(j->link_a))
    if (plan.ground.contains(l)) return;
  throw InvalidInput("joint " + std::to_string(joint) + " is not connected to a ground link");
}

/// Selects `joint` as an input pair. A newly selected input gets the default
/// driver rate until set_driver changes it.
inline MarkerChange select_input(BuildPlan& plan, EntityId joint) {
  require_grounded_joint(plan, joint);
  plan.drivers.try_emplace(joint, kDefaultDriverRate);
  return {joint, true};
}

inline MarkerChange clear_input(BuildPlan& plan, EntityId joint) {
  if (!plan.find_joint(joint)) throw UnknownEntity("no joint " + std::to_string(joint));
  plan.drivers.erase(joint);
  return {joint, false};
}

inline MarkerChange set_driver(BuildPlan& plan, EntityId joint, double rate) {
  if (!std::isfinite(rate)) throw InvalidArgument("driver rate must be finite");
  require_grounded_joint(plan, joint);
  plan.drivers[joint] = rate;
  return {joint, true};
}

}  // namespace sketchlink
