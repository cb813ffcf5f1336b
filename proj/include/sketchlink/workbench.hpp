#pragma once

#include <string>
#include <vector>

#include "sketchlink/document.hpp"
#include "sketchlink/joint_edit.hpp"
#include "sketchlink/kinematics.hpp"
#include "sketchlink/recognition.hpp"

// Sketch -> Build -> Simulate actions on a document. Each action is a single
// undoable edit; domain errors propagate unchanged.

namespace sketchlink {

struct Diagnostic {
  EntityId entity = 0;
  std::string code;
  std::string message;
};

inline double grouping_epsilon(const DocumentState& d, const RecognitionConfig& cfg = {}) {
  if (d.mechanism && d.mechanism->epsilon) return *d.mechanism->epsilon;
  return default_epsilon(d.scene_bounds(), cfg);
}

/// Runs link grouping and gesture recognition over the current strokes.
/// Existing ground and driver marks carry over by stroke membership; built
/// instances are rebound to the new links instead of being rebuilt. A given
/// `epsilon` is stored as the document's grouping tolerance.
inline std::vector<Diagnostic> recognize(SketchDocument& doc, std::optional<double> epsilon = std::nullopt,
                                         const RecognitionConfig& cfg = {}) {
  if (epsilon && !(*epsilon > 0.0 && std::isfinite(*epsilon))) throw InvalidArgument("grouping tolerance must be positive");
  std::vector<Diagnostic> diags;
  doc.edit([&](DocumentState& d) {
    if (epsilon) {
      if (!d.mechanism) d.mechanism.emplace();
      d.mechanism->epsilon = epsilon;
    }
    const double eps = grouping_epsilon(d, cfg);
    RecognitionResult rr = recognize(d.strokes, eps, cfg);
    for (auto& w : rr.warnings) diags.push_back({w.stroke, w.error, w.message});

    MechanismState ms = d.mechanism.value_or(MechanismState{});
    std::vector<BuildWarning> bw;
    BuildPlan mapped = rebind_plan(ms.plan, rr.links, nullptr);
    BuildPlan plan;
    plan.links = rr.links;
    plan.joints = rr.joints;
    plan.ground = mapped.ground;
    for (auto [jid, rate] : ms.plan.drivers)
      if (plan.find_joint(jid)) plan.drivers[jid] = rate;
    // Ground uniqueness per instance may need re-establishing after regrouping.
    for (EntityId g : std::set<EntityId>(plan.ground))
      if (plan.ground.contains(g)) mark_ground(plan, g);
    ms.plan = std::move(plan);
    if (ms.built) {
      BuildResult r = rebind_after_sketch(ms.instances, ms.plan.links);
      ms.instances = std::move(r.mechanisms);
      bw = std::move(r.warnings);
      for (auto& m : ms.instances) {
        for (auto& l : m.links) l.is_ground = ms.plan.ground.contains(l.id);
        orient_ground_first(m);
      }
    }
    for (auto& w : bw) diags.push_back({w.entity, w.code, w.message});
    d.mechanism = std::move(ms);
  });
  return diags;
}

inline MechanismState& require_plan(DocumentState& d) {
  if (!d.mechanism) throw InvalidInput("run recognition first");
  return *d.mechanism;
}

/// Adds a gesture stroke and binds it immediately as a joint. A gesture that
/// cannot be classified or does not touch exactly two links is rejected and
/// leaves the document unchanged.
inline JointHypothesis add_joint_gesture(SketchDocument& doc, std::span<const TimedPoint> samples,
                                         const RecognitionConfig& cfg = {}) {
  Stroke s = make_stroke(samples, StrokeMode::Gesture);
  return doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_plan(d);
    s.id = d.allocate_id();
    d.strokes.push_back(s);
    const GestureClass g = classify_gesture(s, cfg);
    if (g.kind == GestureKind::Unknown) throw InvalidInput("gesture is neither a circle nor a line");
    JointHypothesis j = extract_joint(g, s, ms.plan.links, d.strokes, grouping_epsilon(d, cfg));
    ms.plan.joints.push_back(j);
    return j;
  });
}

inline void mark_ground(SketchDocument& doc, EntityId link) {
  doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_plan(d);
    mark_ground(ms.plan, link);
    if (ms.built) apply_marks(ms.plan, ms.instances);
  });
}

inline MarkerChange select_input(SketchDocument& doc, EntityId joint, bool selected = true) {
  return doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_plan(d);
    MarkerChange c = selected ? select_input(ms.plan, joint) : clear_input(ms.plan, joint);
    if (ms.built) apply_marks(ms.plan, ms.instances);
    return c;
  });
}

inline MarkerChange set_driver(SketchDocument& doc, EntityId joint, double rate) {
  return doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_plan(d);
    MarkerChange c = set_driver(ms.plan, joint, rate);
    if (ms.built) apply_marks(ms.plan, ms.instances);
    return c;
  });
}

inline std::vector<Diagnostic> build(SketchDocument& doc) {
  std::vector<Diagnostic> diags;
  doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_plan(d);
    BuildResult r = build_mechanisms(ms.plan, d.scene_diagonal());
    ms.instances = std::move(r.mechanisms);
    ms.built = true;
    for (auto& w : r.warnings) diags.push_back({w.entity, w.code, w.message});
  });
  return diags;
}

inline MechanismState& require_built(DocumentState& d) {
  MechanismState& ms = require_plan(d);
  if (!ms.built) throw InvalidInput("build the mechanism first");
  return ms;
}

/// Registers a tracked point given in the link's local frame.
inline EntityId trace_point(SketchDocument& doc, EntityId link, Point2 local) {
  return doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_built(d);
    Mechanism* m = ms.instance_of_link(link);
    if (!m) throw UnknownEntity("no link " + std::to_string(link));
    trace_point(*m, link, local);
    return m->instance;
  });
}

inline void clear_tracked(SketchDocument& doc, EntityId instance) {
  doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_built(d);
    for (auto& m : ms.instances)
      if (m.instance == instance) {
        m.tracked.clear();
        return;
      }
    throw UnknownEntity("no instance " + std::to_string(instance));
  });
}

/// Joint drag. `q` is the instance's current pose (null: reference pose).
/// Returns the edited instance id.
inline EntityId move_joint(SketchDocument& doc, EntityId joint, Point2 world, EntityId side,
                           const PoseVector* q = nullptr) {
  return doc.edit([&](DocumentState& d) {
    MechanismState& ms = require_built(d);
    Mechanism* m = ms.instance_of_joint(joint);
    if (!m) throw UnknownEntity("no joint " + std::to_string(joint));
    *m = move_joint(*m, q, joint, world, side);
    return m->instance;
  });
}

}  // namespace sketchlink
