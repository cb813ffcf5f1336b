#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "sketchlink/errors.hpp"
#include "sketchlink/mechanism.hpp"
#include "sketchlink/recognition.hpp"
#include "sketchlink/sketch.hpp"

namespace sketchlink {

/// Recognition and build results stored with the sketch.
struct MechanismState {
  BuildPlan plan;
  bool built = false;
  std::vector<Mechanism> instances;
  std::optional<double> epsilon;  // user override of the grouping tolerance

  friend bool operator==(const MechanismState&, const MechanismState&) = default;

  const RigidLink* find_built_link(EntityId id) const {
    for (const auto& m : instances)
      if (auto* l = m.find_link(id)) return l;
    return nullptr;
  }
  Mechanism* instance_of_link(EntityId id) {
    for (auto& m : instances)
      if (m.find_link(id)) return &m;
    return nullptr;
  }
  Mechanism* instance_of_joint(EntityId id) {
    for (auto& m : instances)
      if (m.find_joint(id)) return &m;
    return nullptr;
  }
};

/// Everything that is saved and everything that undo restores.
struct DocumentState {
  std::vector<Stroke> strokes;  // ascending id
  std::vector<ImageUnderlay> underlays;
  std::vector<Decoration> decorations;
  std::optional<MechanismState> mechanism;
  EntityId next_id = 1;

  friend bool operator==(const DocumentState&, const DocumentState&) = default;

  const Stroke* find_stroke(EntityId id) const {
    auto it = std::lower_bound(strokes.begin(), strokes.end(), id, [](const Stroke& s, EntityId v) { return s.id < v; });
    return it != strokes.end() && it->id == id ? &*it : nullptr;
  }

  /// Axis-aligned bounds of every stroke (ink and gesture).
  Box scene_bounds() const {
    Box b;
    for (const auto& s : strokes) b.add(bounds(s.points));
    return b;
  }

  double scene_diagonal() const {
    const double d = scene_bounds().diagonal();
    return d > 0.0 ? d : 1.0;
  }

  EntityId allocate_id() { return next_id++; }
};

/// Sketch document with unbounded snapshot-based undo/redo. Every successful
/// edit pushes the previous state; a failing edit leaves no trace.
class SketchDocument {
 public:
  SketchDocument() = default;
  explicit SketchDocument(DocumentState s) : state_(std::move(s)) {}

  const DocumentState& state() const { return state_; }
  std::size_t undo_depth() const { return undo_.size(); }
  std::size_t redo_depth() const { return redo_.size(); }

  /// Applies `fn` to a copy of the state and commits it as one undoable
  /// edit. Returns whatever `fn` returns.
  template <class Fn>
  decltype(auto) edit(Fn&& fn) {
    DocumentState next = state_;
    if constexpr (std::is_void_v<std::invoke_result_t<Fn, DocumentState&>>) {
      fn(next);
      commit(std::move(next));
    } else {
      auto result = fn(next);
      commit(std::move(next));
      return result;
    }
  }

  bool undo() {
    if (undo_.empty()) return false;
    redo_.push_back(std::move(state_));
    state_ = std::move(undo_.back());
    undo_.pop_back();
    return true;
  }

  bool redo() {
    if (redo_.empty()) return false;
    undo_.push_back(std::move(state_));
    state_ = std::move(redo_.back());
    redo_.pop_back();
    return true;
  }

  EntityId add_stroke(std::span<const TimedPoint> samples, StrokeMode mode) {
    Stroke s = make_stroke(samples, mode);
    return edit([&](DocumentState& d) {
      s.id = d.allocate_id();
      d.strokes.push_back(std::move(s));
      return d.strokes.back().id;
    });
  }

  void erase_stroke(EntityId id) {
    if (!state_.find_stroke(id)) throw UnknownEntity("no stroke " + std::to_string(id));
    edit([&](DocumentState& d) {
      std::erase_if(d.strokes, [&](const Stroke& s) { return s.id == id; });
    });
  }

  /// Adds an underlay (id 0) or replaces the one with the same id.
  EntityId set_underlay(ImageUnderlay u) {
    if (!(u.scale > 0.0) || !std::isfinite(u.scale)) throw InvalidArgument("underlay scale must be positive");
    if (!u.position.finite() || !std::isfinite(u.rotation)) throw InvalidArgument("underlay placement must be finite");
    if (u.id != 0 && std::none_of(state_.underlays.begin(), state_.underlays.end(), [&](auto& x) { return x.id == u.id; }))
      throw UnknownEntity("no underlay " + std::to_string(u.id));
    return edit([&](DocumentState& d) {
      if (u.id == 0) {
        u.id = d.allocate_id();
        d.underlays.push_back(u);
      } else {
        for (auto& x : d.underlays)
          if (x.id == u.id) x = u;
      }
      return u.id;
    });
  }

  /// Attaches strokes given in world coordinates to a recognized link. They
  /// are stored in the link's local frame.
  EntityId attach_decoration(EntityId link, std::vector<std::vector<TimedPoint>> world_strokes) {
    Pose frame;
    const auto& ms = state_.mechanism;
    if (!ms) throw UnknownEntity("no link " + std::to_string(link));
    if (const auto* built = ms->find_built_link(link)) frame = built->pose;
    else if (!ms->plan.find_link(link)) throw UnknownEntity("no link " + std::to_string(link));
    Decoration dec;
    dec.link = link;
    for (auto& samples : world_strokes) {
      for (auto& tp : samples) tp.p = frame.inverse_apply(tp.p);
      dec.strokes.push_back(make_stroke(samples, StrokeMode::Ink));
    }
    return edit([&](DocumentState& d) {
      dec.id = d.allocate_id();
      for (auto& s : dec.strokes) s.id = d.allocate_id();
      d.decorations.push_back(dec);
      return dec.id;
    });
  }

 private:
  void commit(DocumentState next) {
    undo_.push_back(std::move(state_));
    state_ = std::move(next);
    redo_.clear();
  }

  DocumentState state_;
  std::vector<DocumentState> undo_;
  std::vector<DocumentState> redo_;
};

}  // namespace sketchlink
