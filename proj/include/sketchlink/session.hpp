#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sketchlink/export.hpp"
#include "sketchlink/persistence.hpp"
#include "sketchlink/workbench.hpp"

// Session protocol. Clients send command envelopes
//   {"seq", "session", "command", "args", "base_revision"?}
// and receive events that echo "seq". Mutating commands answer with a
// "delta" event that replaces the changed top-level sections of the state;
// runs stream "sim" events through pump(). See docs/protocol.md.

namespace sketchlink {

// ---------------------------------------------------------------------------
// Simulation state as seen by clients

inline json to_json(const SimState& s) {
  return {{"t", s.t},
          {"q", std::vector<double>(s.q.data(), s.q.data() + s.q.size())},
          {"drive", s.drive},
          {"status", to_string(s.status)},
          {"iterations", s.iterations},
          {"residual", s.residual_norm},
          {"blocked_at", s.blocked_at}};
}

inline json samples_json(const std::vector<TraceSample>& v, std::size_t from) {
  json a = json::array();
  for (std::size_t i = from; i < v.size(); ++i) a.push_back({v[i].t, v[i].p.x, v[i].p.y});
  return a;
}

/// Per-instance simulation record held by a session.
struct SimTrack {
  Mechanism mech;  // the instance this state belongs to
  SimState state;
  std::vector<Trace> traces;
  std::vector<std::size_t> sent;  // samples already streamed, per trace
  bool running = false;

  json to_json() const {
    json traces_j = json::array();
    for (const auto& tr : traces)
      traces_j.push_back({{"link", tr.point.link},
                          {"point", point_json(tr.point.local)},
                          {"samples", samples_json(tr.samples, 0)},
                          {"closed", tr.closed}});
    return {{"instance", mech.instance}, {"state", sketchlink::to_json(state)}, {"traces", traces_j},
            {"running", running}};
  }

  /// Incremental event body: state plus the samples appended since the
  /// last call.
  json take_update() {
    json traces_j = json::array();
    sent.resize(traces.size(), 0);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto& tr = traces[i];
      traces_j.push_back({{"link", tr.point.link},
                          {"point", point_json(tr.point.local)},
                          {"from", sent[i]},
                          {"append", samples_json(tr.samples, sent[i])},
                          {"closed", tr.closed}});
      sent[i] = tr.samples.size();
    }
    return {{"instance", mech.instance}, {"state", sketchlink::to_json(state)}, {"traces", traces_j},
            {"running", running}};
  }
};

namespace detail {

inline bool same_kinematics(Mechanism a, Mechanism b) {
  a.tracked.clear();
  b.tracked.clear();
  return a == b;
}

inline double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

/// Typed access to command arguments; every failure is a BadEnvelope.
class Args {
 public:
  explicit Args(const json& j) : j_(j) {
    if (!j_.is_object()) throw BadEnvelope("args must be an object");
  }
  bool has(const char* k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  const json& raw(const char* k) const {
    if (!has(k)) throw BadEnvelope(std::string("missing argument '") + k + "'");
    return j_.at(k);
  }
  double number(const char* k) const {
    const json& v = raw(k);
    if (!v.is_number()) throw BadEnvelope(std::string("argument '") + k + "' must be a number");
    return v.get<double>();
  }
  EntityId id(const char* k) const {
    const json& v = raw(k);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw BadEnvelope(std::string("argument '") + k + "' must be an id");
    return v.get<EntityId>();
  }
  std::string string(const char* k) const {
    const json& v = raw(k);
    if (!v.is_string()) throw BadEnvelope(std::string("argument '") + k + "' must be a string");
    return v.get<std::string>();
  }
  bool boolean(const char* k, bool fallback) const {
    if (!has(k)) return fallback;
    if (!j_.at(k).is_boolean()) throw BadEnvelope(std::string("argument '") + k + "' must be a boolean");
    return j_.at(k).get<bool>();
  }
  Point2 point(const char* k) const { return to_point(raw(k), k); }

  static Point2 to_point(const json& v, const std::string& what) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw BadEnvelope("'" + what + "' must be an [x, y] pair");
    return {v[0].get<double>(), v[1].get<double>()};
  }

  /// {"points": [[x, y], ...], "t": [ms, ...]} -> samples
  static std::vector<TimedPoint> samples(const json& s) {
    if (!s.is_object() || !s.contains("points") || !s.at("points").is_array())
      throw BadEnvelope("stroke needs a 'points' array");
    const json& pts = s.at("points");
    const json t = s.contains("t") ? s.at("t") : json::array();
    if (!t.is_array() || (!t.empty() && t.size() != pts.size()))
      throw BadEnvelope("'t' must have one timestamp per point");
    std::vector<TimedPoint> out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double ms = static_cast<double>(i);
      if (!t.empty()) {
        if (!t[i].is_number()) throw BadEnvelope("timestamps must be numbers");
        ms = t[i].get<double>();
      }
      out.push_back({to_point(pts[i], "points"), ms});
    }
    return out;
  }

 private:
  const json& j_;
};

}  // namespace detail

struct SessionOptions {
  double max_event_rate = 60.0;  // sim events per second per run; 0 = every step
  std::function<double()> clock = detail::steady_seconds;
};

/// One document and its simulations. Commands are applied strictly in call
/// order; runs advance only inside pump().
class Session {
 public:
  Session(std::string id, SessionOptions opt = {}) : id_(std::move(id)), opt_(std::move(opt)) {}

  const std::string& id() const { return id_; }
  std::uint64_t revision() const { return revision_; }
  const SketchDocument& document() const { return doc_; }
  bool dirty() const { return dirty_; }
  bool running() const { return !runs_.empty(); }
  const SimTrack* sim(EntityId instance) const {
    auto it = sims_.find(instance);
    return it == sims_.end() ? nullptr : &it->second;
  }

  /// Full state: what a fresh client needs to render.
  json state_json() const {
    json sims = json::array();
    for (const auto& [iid, track] : sims_) sims.push_back(track.to_json());
    return {{"revision", revision_}, {"document", to_json(doc_.state())}, {"sim", sims}};
  }

  json snapshot(std::int64_t seq) const {
    json e = event("snapshot", seq);
    e["state"] = state_json();
    return e;
  }

  /// Applies one command. Errors become a single "error" event and leave
  /// the session untouched.
  std::vector<json> handle(const std::string& command, const json& args_j, std::int64_t seq,
                           std::optional<std::uint64_t> base_revision = std::nullopt) {
    std::vector<json> out;
    try {
      if (base_revision && *base_revision != revision_)
        throw StaleRevision("command based on revision " + std::to_string(*base_revision) + ", session is at " +
                            std::to_string(revision_));
      dispatch(command, detail::Args(args_j), seq, out);
    } catch (const Error& e) {
      out.clear();
      json ev = event("error", seq);
      ev["command"] = command;
      ev["error"] = e.name();
      ev["message"] = e.what();
      out.push_back(std::move(ev));
    }
    return out;
  }

  /// Advances every active run by up to `max_steps` steps and returns the
  /// sim events due under the throttle. A finished run always reports its
  /// final state.
  std::vector<json> pump(std::size_t max_steps) {
    std::vector<json> out;
    for (auto it = runs_.begin(); it != runs_.end();) {
      Run& r = *it->second;
      SimTrack& track = sims_.at(it->first);
      for (std::size_t k = 0; k < max_steps && !r.stepper.done(); ++k) {
        track.state = r.stepper.step();
        record(*r.sys, track.state, track.traces);
        const double now = opt_.clock();
        if (opt_.max_event_rate <= 0.0 || now - r.last_emit >= 1.0 / opt_.max_event_rate) {
          if (!r.stepper.done()) {
            out.push_back(sim_event(track, r.seq));
            r.last_emit = now;
          }
        }
      }
      if (r.stepper.done()) {
        mark_closed_if_full_turn(*r.sys, r.stepper.start().drive, track.state.drive, track.traces);
        track.running = false;
        out.push_back(sim_event(track, r.seq));
        it = runs_.erase(it);
      } else {
        ++it;
      }
    }
    return out;
  }

  /// Stops every run at the current step boundary.
  std::vector<json> stop_all(std::int64_t seq) {
    std::vector<json> out;
    for (auto& [iid, r] : runs_) {
      SimTrack& track = sims_.at(iid);
      track.running = false;
      out.push_back(sim_event(track, seq));
    }
    runs_.clear();
    return out;
  }

 private:
  struct Run {
    std::unique_ptr<ConstraintSystem> sys;
    Stepper stepper;
    std::int64_t seq;
    double last_emit;
  };

  json event(const char* type, std::int64_t seq) const {
    return {{"type", type}, {"seq", seq}, {"session", id_}, {"revision", revision_}};
  }

  json sim_event(SimTrack& track, std::int64_t seq) const {
    json e = event("sim", seq);
    e["sim"] = track.take_update();
    return e;
  }

  // -------------------------------------------------------------------------

  void dispatch(const std::string& cmd, const detail::Args& a, std::int64_t seq, std::vector<json>& out) {
    using Fn = json (Session::*)(const detail::Args&);
    static const std::map<std::string, Fn> mutating{
        {"add_stroke", &Session::cmd_add_stroke},
        {"undo", &Session::cmd_undo},
        {"redo", &Session::cmd_redo},
        {"set_underlay", &Session::cmd_set_underlay},
        {"attach_decoration", &Session::cmd_attach_decoration},
        {"recognize", &Session::cmd_recognize},
        {"mark_ground", &Session::cmd_mark_ground},
        {"add_joint_gesture", &Session::cmd_add_joint_gesture},
        {"select_input", &Session::cmd_select_input},
        {"set_driver", &Session::cmd_set_driver},
        {"build", &Session::cmd_build},
        {"move_joint", &Session::cmd_move_joint},
        {"trace_point", &Session::cmd_trace_point},
        {"clear_trace", &Session::cmd_clear_trace},
        {"load", &Session::cmd_load},
    };
    if (auto it = mutating.find(cmd); it != mutating.end()) {
      mutate(cmd, it->second, a, seq, out);
      return;
    }
    if (cmd == "snapshot") {
      out.push_back(snapshot(seq));
    } else if (cmd == "run") {
      cmd_run(a, seq, out);
    } else if (cmd == "pause") {
      cmd_pause(a, seq, out);
    } else if (cmd == "scrub") {
      cmd_scrub(a, seq, out);
    } else if (cmd == "save") {
      json e = event("result", seq);
      e["command"] = cmd;
      e["result"] = cmd_save(a);
      out.push_back(std::move(e));
    } else if (cmd == "export_trace") {
      json e = event("result", seq);
      e["command"] = cmd;
      e["result"] = cmd_export_trace(a);
      out.push_back(std::move(e));
    } else {
      throw BadEnvelope("unknown command '" + cmd + "'");
    }
  }

  /// Runs a document edit, reconciles simulations and emits one delta with
  /// the changed sections.
  /// Document edits are atomic, so a throwing command changes nothing.
  void mutate(const std::string& cmd, json (Session::*fn)(const detail::Args&), const detail::Args& a,
              std::int64_t seq, std::vector<json>& out) {
    const json doc_before = to_json(doc_.state());
    const json sim_before = sim_json();
    json result = (this->*fn)(a);
    reconcile();
    ++revision_;
    dirty_ = true;
    json changes = json::object();
    const json doc_after = to_json(doc_.state());
    json doc_changes = json::object();
    for (auto it = doc_after.begin(); it != doc_after.end(); ++it)
      if (!doc_before.contains(it.key()) || doc_before.at(it.key()) != it.value()) doc_changes[it.key()] = it.value();
    if (!doc_changes.empty()) changes["document"] = doc_changes;
    const json sim_after = sim_json();
    if (sim_after != sim_before) {
      changes["sim"] = sim_after;
      // The delta carries every sample recorded so far.
      for (auto& [iid, track] : sims_) {
        track.sent.clear();
        for (const auto& tr : track.traces) track.sent.push_back(tr.samples.size());
      }
    }
    json e = event("delta", seq);
    e["command"] = cmd;
    e["result"] = result;
    e["changes"] = changes;
    out.push_back(std::move(e));
  }

  json sim_json() const {
    json sims = json::array();
    for (const auto& [iid, track] : sims_) sims.push_back(track.to_json());
    return sims;
  }

  /// Keeps simulations consistent with the document: instances that vanished
  /// or changed kinematically lose their state (and traces); a change in
  /// tracked points only adjusts the trace list.
  void reconcile() {
    const auto& ms = doc_.state().mechanism;
    for (auto it = sims_.begin(); it != sims_.end();) {
      const Mechanism* now = nullptr;
      if (ms && ms->built)
        for (const auto& m : ms->instances)
          if (m.instance == it->first) now = &m;
      if (!now || !detail::same_kinematics(*now, it->second.mech)) {
        runs_.erase(it->first);
        it = sims_.erase(it);
        continue;
      }
      SimTrack& track = it->second;
      if (now->tracked != track.mech.tracked) {
        std::vector<Trace> next;
        std::vector<std::size_t> sent;
        for (const auto& tp : now->tracked) {
          auto old = std::find_if(track.traces.begin(), track.traces.end(), [&](const Trace& t) { return t.point == tp; });
          if (old != track.traces.end()) {
            next.push_back(*old);
            sent.push_back(track.sent.at(static_cast<std::size_t>(old - track.traces.begin())));
          } else {
            next.push_back({tp, {}, false});
            sent.push_back(0);
          }
        }
        track.traces = std::move(next);
        track.sent = std::move(sent);
        track.mech.tracked = now->tracked;
      }
      ++it;
    }
  }

  // ---- mutating commands ---------------------------------------------------

  json cmd_add_stroke(const detail::Args& a) {
    const std::string mode = a.has("mode") ? a.string("mode") : "ink";
    if (mode != "ink" && mode != "gesture") throw BadEnvelope("mode must be 'ink' or 'gesture'");
    const auto samples = detail::Args::samples(a.raw("stroke"));
    const EntityId id = doc_.add_stroke(samples, mode == "ink" ? StrokeMode::Ink : StrokeMode::Gesture);
    return {{"id", id}};
  }

  json cmd_undo(const detail::Args&) {
    if (!doc_.undo()) throw InvalidInput("nothing to undo");
    return json::object();
  }

  json cmd_redo(const detail::Args&) {
    if (!doc_.redo()) throw InvalidInput("nothing to redo");
    return json::object();
  }

  json cmd_set_underlay(const detail::Args& a) {
    ImageUnderlay u;
    u.id = a.has("id") ? a.id("id") : 0;
    u.image = a.string("image");
    u.position = a.has("position") ? a.point("position") : Point2{};
    u.scale = a.has("scale") ? a.number("scale") : 1.0;
    u.rotation = a.has("rotation") ? a.number("rotation") : 0.0;
    return {{"id", doc_.set_underlay(u)}};
  }

  json cmd_attach_decoration(const detail::Args& a) {
    const json& strokes = a.raw("strokes");
    if (!strokes.is_array()) throw BadEnvelope("'strokes' must be an array");
    std::vector<std::vector<TimedPoint>> world;
    for (const auto& s : strokes) world.push_back(detail::Args::samples(s));
    return {{"id", doc_.attach_decoration(a.id("link"), world)}};
  }

  static json diagnostics_json(const std::vector<Diagnostic>& diags) {
    json d = json::array();
    for (const auto& x : diags) d.push_back({{"entity", x.entity}, {"code", x.code}, {"message", x.message}});
    return d;
  }

  json cmd_recognize(const detail::Args& a) {
    std::optional<double> eps;
    if (a.has("epsilon")) eps = a.number("epsilon");
    return {{"diagnostics", diagnostics_json(recognize(doc_, eps))}};
  }

  json cmd_mark_ground(const detail::Args& a) {
    mark_ground(doc_, a.id("link"));
    return json::object();
  }

  json cmd_add_joint_gesture(const detail::Args& a) {
    const JointHypothesis j = add_joint_gesture(doc_, detail::Args::samples(a.raw("stroke")));
    json r{{"id", j.id}, {"kind", to_string(j.kind)}, {"links", {j.link_a, j.link_b}}, {"anchor", point_json(j.anchor)}};
    if (j.kind == JointKind::Prismatic) r["direction"] = point_json(j.direction);
    return r;
  }

  static json marker_json(const MarkerChange& c) { return {{"joint", c.joint}, {"input", c.input}}; }

  json cmd_select_input(const detail::Args& a) {
    return marker_json(select_input(doc_, a.id("joint"), a.boolean("selected", true)));
  }

  json cmd_set_driver(const detail::Args& a) {
    return marker_json(set_driver(doc_, a.id("joint"), a.number("rate")));
  }

  json cmd_build(const detail::Args&) {
    const auto diags = build(doc_);
    json inst = json::array();
    for (const auto& m : doc_.state().mechanism->instances)
      inst.push_back({{"instance", m.instance}, {"mobility", mobility(m)}});
    return {{"diagnostics", diagnostics_json(diags)}, {"instances", inst}};
  }

  json cmd_move_joint(const detail::Args& a) {
    const EntityId joint = a.id("joint");
    const MechanismState& ms = require_built_state();
    EntityId iid = 0;
    for (const auto& m : ms.instances)
      if (m.find_joint(joint)) iid = m.instance;
    if (iid == 0) throw UnknownEntity("no joint " + std::to_string(joint));
    if (runs_.contains(iid)) throw InvalidInput("pause the simulation before moving a joint");
    const SimTrack* track = sim(iid);
    const PoseVector* q = track && track->state.ok() ? &track->state.q : nullptr;
    move_joint(doc_, joint, a.point("to"), a.id("side"), q);
    return {{"instance", iid}};
  }

  json cmd_trace_point(const detail::Args& a) {
    const EntityId link = a.id("link");
    const MechanismState& ms = require_built_state();
    Point2 local;
    if (a.has("local")) {
      local = a.point("local");
    } else {
      // World position in the currently displayed pose.
      const Point2 world = a.point("world");
      const RigidLink* l = ms.find_built_link(link);
      if (!l) throw UnknownEntity("no link " + std::to_string(link));
      Pose pose = l->pose;
      for (const auto& [iid, track] : sims_)
        if (track.mech.find_link(link) && !l->is_ground) pose = ConstraintSystem(track.mech).pose(track.state.q, link);
      local = pose.inverse_apply(world);
    }
    const EntityId iid = trace_point(doc_, link, local);
    return {{"instance", iid}, {"link", link}, {"point", point_json(local)}};
  }

  json cmd_clear_trace(const detail::Args& a) {
    const MechanismState& ms = require_built_state();
    if (a.has("instance")) {
      clear_tracked(doc_, a.id("instance"));
    } else {
      doc_.edit([&](DocumentState& d) {
        for (auto& m : d.mechanism->instances) m.tracked.clear();
      });
    }
    (void)ms;
    return json::object();
  }

  json cmd_load(const detail::Args& a) {
    DocumentState loaded = load_state(a.has("data") ? a.string("data") : read_file(a.string("path")));
    doc_.edit([&](DocumentState& d) { d = std::move(loaded); });
    return json::object();
  }

  // ---- simulation commands -------------------------------------------------

  const MechanismState& require_built_state() {
    const auto& ms = doc_.state().mechanism;
    if (!ms) throw InvalidInput("run recognition first");
    if (!ms->built) throw InvalidInput("build the mechanism first");
    return *ms;
  }

  /// Instance named by "instance", or the only one.
  const Mechanism& target_instance(const detail::Args& a) {
    const MechanismState& ms = require_built_state();
    if (a.has("instance")) {
      const EntityId iid = a.id("instance");
      for (const auto& m : ms.instances)
        if (m.instance == iid) return m;
      throw UnknownEntity("no instance " + std::to_string(iid));
    }
    if (ms.instances.size() != 1) throw InvalidInput("name the instance to simulate");
    return ms.instances.front();
  }

  SimTrack& track_for(const Mechanism& m) {
    auto it = sims_.find(m.instance);
    if (it != sims_.end()) return it->second;
    const ConstraintSystem sys = assemble(m);
    SimTrack t;
    t.mech = m;
    t.state = sys.initial_state();
    t.traces = make_traces(m);
    t.sent.assign(t.traces.size(), 0);
    record(sys, t.state, t.traces);
    return sims_.emplace(m.instance, std::move(t)).first->second;
  }

  void cmd_run(const detail::Args& a, std::int64_t seq, std::vector<json>& out) {
    const Mechanism& m = target_instance(a);
    auto sys = std::make_unique<ConstraintSystem>(assemble(m));
    if (a.has("rates")) {
      const json& r = a.raw("rates");
      if (!r.is_array()) throw BadEnvelope("'rates' must be an array");
      std::vector<double> rates;
      for (const auto& x : r) {
        if (!x.is_number()) throw BadEnvelope("rates must be numbers");
        rates.push_back(x.get<double>());
      }
      sys->set_rates(rates);
    } else if (a.has("rate")) {
      std::vector<double> rates = sys->rates();
      if (rates.empty()) throw InvalidInput("instance has no driver");
      rates[0] = a.number("rate");
      sys->set_rates(rates);
    }
    for (double r : sys->rates())
      if (!std::isfinite(r)) throw InvalidArgument("driver rate must be finite");
    const double dt = a.has("dt") ? a.number("dt") : default_dt(*sys);
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
    std::optional<double> duration;
    if (a.has("duration") && a.has("cycles")) throw InvalidArgument("give duration or cycles, not both");
    if (a.has("duration")) duration = a.number("duration");
    if (a.has("cycles")) {
      const auto cycle = cycle_duration(*sys);
      if (!cycle) throw InvalidInput("cycles need a revolute driver with a nonzero rate");
      duration = a.number("cycles") * *cycle;
    }
    if (duration && !(*duration >= 0.0 && std::isfinite(*duration)))
      throw InvalidArgument("duration must be non-negative");
    SimTrack& track = track_for(m);
    if (!track.state.ok()) throw InvalidInput(std::string("simulation is ") + to_string(track.state.status));
    Stepper stepper(*sys, track.state, dt, duration);

    auto preempted = runs_.find(m.instance);
    if (preempted != runs_.end()) runs_.erase(preempted);
    track.running = true;
    json ack = event("ack", seq);
    ack["command"] = "run";
    ack["instance"] = m.instance;
    out.push_back(std::move(ack));
    out.push_back(sim_event(track, seq));
    // The stepper points at *sys, which stays put when the owner moves.
    runs_.emplace(m.instance, std::make_unique<Run>(Run{std::move(sys), std::move(stepper), seq, opt_.clock()}));
  }

  void cmd_pause(const detail::Args& a, std::int64_t seq, std::vector<json>& out) {
    json ack = event("ack", seq);
    ack["command"] = "pause";
    out.push_back(ack);
    if (!a.has("instance")) {
      for (auto& e : stop_all(seq)) out.push_back(std::move(e));
      return;
    }
    const EntityId iid = a.id("instance");
    auto it = runs_.find(iid);
    if (it == runs_.end()) return;
    SimTrack& track = sims_.at(iid);
    track.running = false;
    runs_.erase(it);
    out.push_back(sim_event(track, seq));
  }

  void cmd_scrub(const detail::Args& a, std::int64_t seq, std::vector<json>& out) {
    const Mechanism& m = target_instance(a);
    const ConstraintSystem sys = assemble(m);
    const std::size_t driver = a.has("driver") ? static_cast<std::size_t>(a.id("driver")) : 0;
    const double target = a.number("target");
    SimTrack& track = track_for(m);
    runs_.erase(m.instance);
    track.running = false;
    track.state = scrub_input(sys, track.state, target, driver, &track.traces);
    json ack = event("ack", seq);
    ack["command"] = "scrub";
    ack["instance"] = m.instance;
    out.push_back(std::move(ack));
    out.push_back(sim_event(track, seq));
  }

  // ---- read-only commands --------------------------------------------------

  static std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !(out << data) || !out.flush()) throw IoError("cannot write " + path);
  }

  json cmd_save(const detail::Args& a) {
    const std::string text = save(doc_);
    dirty_ = false;
    if (a.has("path")) {
      write_file(a.string("path"), text);
      return {{"path", a.string("path")}};
    }
    return {{"data", text}};
  }

  json cmd_export_trace(const detail::Args& a) {
    const std::string format = a.has("format") ? a.string("format") : "csv";
    std::vector<Trace> traces;
    std::vector<Mechanism> mechs;
    for (const auto& [iid, track] : sims_) {
      if (a.has("instance") && iid != a.id("instance")) continue;
      traces.insert(traces.end(), track.traces.begin(), track.traces.end());
      mechs.push_back(track.mech);
    }
    std::string data;
    if (format == "csv") data = traces_to_csv(traces);
    else if (format == "svg") data = traces_to_svg(mechs, traces);
    else throw InvalidArgument("format must be 'csv' or 'svg'");
    return {{"format", format}, {"data", data}};
  }

  std::string id_;
  SessionOptions opt_;
  SketchDocument doc_;
  std::uint64_t revision_ = 0;
  bool dirty_ = false;
  std::map<EntityId, SimTrack> sims_;
  std::map<EntityId, std::unique_ptr<Run>> runs_;
};

// ---------------------------------------------------------------------------

/// Routes envelopes to sessions. Single-threaded: the caller interleaves
/// handle() for incoming messages with pump() while runs are active.
class SessionManager {
 public:
  explicit SessionManager(SessionOptions opt = {}) : opt_(std::move(opt)) {}

  std::vector<json> handle_text(std::string_view text) {
    json env;
    try {
      env = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
      return {protocol_error(nullptr, "", BadEnvelope(std::string("malformed JSON: ") + e.what()))};
    }
    return handle(env);
  }

  std::vector<json> handle(const json& env) {
    json seq = nullptr;
    std::string sid;
    try {
      if (!env.is_object()) throw BadEnvelope("envelope must be an object");
      if (!env.contains("seq") || !env.at("seq").is_number_integer()) throw BadEnvelope("envelope needs an integer 'seq'");
      seq = env.at("seq");
      if (!env.contains("command") || !env.at("command").is_string())
        throw BadEnvelope("envelope needs a string 'command'");
      const std::string cmd = env.at("command").get<std::string>();
      static const json empty = json::object();
      const json& args = env.contains("args") ? env.at("args") : empty;
      std::optional<std::uint64_t> base;
      if (env.contains("base_revision") && !env.at("base_revision").is_null()) {
        const json& b = env.at("base_revision");
        if (!b.is_number_integer() || b.get<std::int64_t>() < 0) throw BadEnvelope("'base_revision' must be a revision");
        base = env.at("base_revision").get<std::uint64_t>();
      }
      const auto seq_v = seq.get<std::int64_t>();

      if (cmd == "ping") return {{{"type", "pong"}, {"seq", seq_v}}};
      if (cmd == "pong") return {};
      if (cmd == "create_session") {
        sid = "s" + std::to_string(++created_);
        auto& s = sessions_.emplace(sid, std::make_unique<Session>(sid, opt_)).first->second;
        return {{{"type", "created"}, {"seq", seq_v}, {"session", sid}, {"revision", s->revision()}}};
      }
      if (!env.contains("session") || !env.at("session").is_string())
        throw BadEnvelope("envelope needs a string 'session'");
      sid = env.at("session").get<std::string>();
      Session* s = find(sid);
      if (!s) throw UnknownSession("no session '" + sid + "'");
      if (!args.is_object()) throw BadEnvelope("args must be an object");
      return s->handle(cmd, args, seq_v, base);
    } catch (const Error& e) {
      return {protocol_error(seq, sid, e)};
    }
  }

  /// Advances every running session; see Session::pump.
  std::vector<json> pump(std::size_t max_steps) {
    std::vector<json> out;
    for (auto& [id, s] : sessions_)
      for (auto& e : s->pump(max_steps)) out.push_back(std::move(e));
    return out;
  }

  bool running() const {
    return std::any_of(sessions_.begin(), sessions_.end(), [](auto& kv) { return kv.second->running(); });
  }

  /// Halts every run at its current step boundary.
  std::vector<json> stop_all() {
    std::vector<json> out;
    for (auto& [id, s] : sessions_)
      for (auto& e : s->stop_all(0)) out.push_back(std::move(e));
    return out;
  }

  std::vector<std::string> unsaved() const {
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_)
      if (s->dirty()) ids.push_back(id);
    return ids;
  }

  Session* find(const std::string& id) {
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second.get();
  }

  std::size_t size() const { return sessions_.size(); }

 private:
  static json protocol_error(const json& seq, const std::string& sid, const Error& e) {
    json ev{{"type", "error"}, {"seq", seq}, {"error", e.name()}, {"message", e.what()}};
    if (!sid.empty()) ev["session"] = sid;
    return ev;
  }

  SessionOptions opt_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t created_ = 0;
};

// ---------------------------------------------------------------------------

/// Minimal client-side state mirror: applies snapshot, delta and sim events
/// the way a UI would. Used to check that the event stream is complete.
class ClientReplica {
 public:
  /// Returns false when the event cannot be applied (the client must ask for
  /// a snapshot).
  bool apply(const json& ev) {
    const std::string type = ev.value("type", "");
    if (type == "snapshot") {
      const json& st = ev.at("state");
      revision_ = st.at("revision").get<std::uint64_t>();
      document_ = st.at("document");
      sim_ = st.at("sim");
      return true;
    }
    if (type == "delta") {
      const auto rev = ev.at("revision").get<std::uint64_t>();
      if (rev != revision_ + 1) return false;
      revision_ = rev;
      const json& ch = ev.at("changes");
      if (ch.contains("document"))
        for (auto it = ch.at("document").begin(); it != ch.at("document").end(); ++it) document_[it.key()] = it.value();
      if (ch.contains("sim")) sim_ = ch.at("sim");
      return true;
    }
    if (type == "sim") return apply_sim(ev.at("sim"));
    return true;
  }

  json state() const { return {{"revision", revision_}, {"document", document_}, {"sim", sim_}}; }
  std::uint64_t revision() const { return revision_; }

 private:
  bool apply_sim(const json& u) {
    const auto iid = u.at("instance").get<EntityId>();
    json* entry = nullptr;
    std::size_t pos = 0;
    for (; pos < sim_.size(); ++pos) {
      const auto cur = sim_[pos].at("instance").get<EntityId>();
      if (cur == iid) entry = &sim_[pos];
      if (cur >= iid) break;
    }
    if (!entry) {
      sim_.insert(sim_.begin() + static_cast<std::ptrdiff_t>(pos),
                  json{{"instance", iid}, {"state", nullptr}, {"traces", json::array()}, {"running", false}});
      entry = &sim_[pos];
    }
    (*entry)["state"] = u.at("state");
    (*entry)["running"] = u.at("running");
    json& traces = (*entry)["traces"];
    const json& upd = u.at("traces");
    json next = json::array();
    for (std::size_t i = 0; i < upd.size(); ++i) {
      const json& t = upd[i];
      json tr = i < traces.size() ? traces[i] : json{{"link", t.at("link")}, {"point", t.at("point")},
                                                      {"samples", json::array()}, {"closed", false}};
      json& samples = tr["samples"];
      const auto from = t.at("from").get<std::size_t>();
      if (from > samples.size()) return false;
      const json& app = t.at("append");
      for (std::size_t k = samples.size() - from; k < app.size(); ++k) samples.push_back(app[k]);
      tr["closed"] = t.at("closed");
      next.push_back(std::move(tr));
    }
    traces = std::move(next);
    return true;
  }

  std::uint64_t revision_ = 0;
  json document_ = to_json(DocumentState{});
  json sim_ = json::array();
};

}  // namespace sketchlink
