#pragma once

#include <nlohmann/json.hpp>

#include <set>
#include <string>
#include <string_view>

#include "sketchlink/document.hpp"
#include "sketchlink/errors.hpp"

namespace sketchlink {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Writing

inline json point_json(Point2 p) { return json::array({p.x, p.y}); }

inline json to_json(const Stroke& s) {
  json pts = json::array();
  for (auto p : s.points) pts.push_back(point_json(p));
  return {{"id", s.id}, {"mode", to_string(s.mode)}, {"points", pts}, {"t", s.timestamps}};
}

inline json to_json(const ImageUnderlay& u) {
  return {{"id", u.id}, {"image", u.image}, {"position", point_json(u.position)}, {"scale", u.scale},
          {"rotation", u.rotation}};
}

inline json to_json(const Decoration& d) {
  json strokes = json::array();
  for (const auto& s : d.strokes) strokes.push_back(to_json(s));
  return {{"id", d.id}, {"link", d.link}, {"strokes", strokes}};
}

inline json to_json(const BuildPlan& p) {
  json links = json::array();
  for (const auto& l : p.links) links.push_back({{"id", l.id}, {"strokes", l.strokes}, {"color", l.color}});
  json joints = json::array();
  for (const auto& j : p.joints) {
    json o{{"id", j.id}, {"kind", to_string(j.kind)}, {"links", {j.link_a, j.link_b}}, {"anchor", point_json(j.anchor)}};
    if (j.kind == JointKind::Prismatic) o["direction"] = point_json(j.direction);
    joints.push_back(o);
  }
  json drivers = json::array();
  for (auto [jid, rate] : p.drivers) drivers.push_back({{"joint", jid}, {"rate", rate}});
  return {{"links", links}, {"joints", joints}, {"ground", p.ground}, {"drivers", drivers}};
}

inline json to_json(const Mechanism& m) {
  json links = json::array();
  for (const auto& l : m.links)
    links.push_back({{"id", l.id}, {"pose", {l.pose.x, l.pose.y, l.pose.theta}}, {"strokes", l.strokes}, {"ground", l.is_ground}});
  json joints = json::array();
  for (const auto& j : m.joints) {
    json o{{"id", j.id},
           {"kind", to_string(j.kind)},
           {"links", {j.link_a, j.link_b}},
           {"anchor_a", point_json(j.anchor_a)},
           {"anchor_b", point_json(j.anchor_b)},
           {"driver", j.driver ? json{{"rate", j.driver->rate}} : json(nullptr)}};
    if (j.kind == JointKind::Prismatic) {
      o["axis_b"] = point_json(j.axis_b);
      o["angle_offset"] = j.angle_offset;
    }
    joints.push_back(o);
  }
  json tracked = json::array();
  for (const auto& tp : m.tracked) tracked.push_back({{"link", tp.link}, {"point", point_json(tp.local)}});
  return {{"instance", m.instance}, {"scale", m.scale}, {"links", links}, {"joints", joints}, {"tracked", tracked}};
}

inline json to_json(const MechanismState& ms) {
  json instances = json::array();
  for (const auto& m : ms.instances) instances.push_back(to_json(m));
  return {{"plan", to_json(ms.plan)},
          {"built", ms.built},
          {"instances", instances},
          {"epsilon", ms.epsilon ? json(*ms.epsilon) : json(nullptr)}};
}

inline json strokes_json(const std::vector<Stroke>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(to_json(s));
  return a;
}

inline json to_json(const DocumentState& d) {
  json underlays = json::array();
  for (const auto& u : d.underlays) underlays.push_back(to_json(u));
  json decorations = json::array();
  for (const auto& x : d.decorations) decorations.push_back(to_json(x));
  return {{"version", kFormatVersion},
          {"strokes", strokes_json(d.strokes)},
          {"underlays", underlays},
          {"decorations", decorations},
          {"mechanism", d.mechanism ? to_json(*d.mechanism) : json(nullptr)}};
}

/// Canonical text form: sorted keys, shortest round-trip decimals.
inline std::string save(const DocumentState& d) { return to_json(d).dump() + "\n"; }
inline std::string save(const SketchDocument& doc) { return save(doc.state()); }

// ---------------------------------------------------------------------------
// Reading

namespace detail {

/// A JSON node together with its pointer path, for error positions.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(what, path_.empty() ? "/" : path_); }

  Node at(const std::string& key) const {
    if (!j_.is_object()) fail("expected an object");
    auto it = j_.find(key);
    if (it == j_.end()) Node(j_, path_ + "/" + key).fail("missing field");
    return {*it, path_ + "/" + key};
  }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }
  bool is_null() const { return j_.is_null(); }

  std::vector<Node> items() const {
    if (!j_.is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], path_ + "/" + std::to_string(i));
    return out;
  }
  double number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("number is not finite");
    return v;
  }
  EntityId id() const {
    if (!j_.is_number_unsigned()) fail("expected a non-negative integer");
    return j_.get<EntityId>();
  }
  std::size_t count() const { return static_cast<std::size_t>(id()); }
  bool boolean() const {
    if (!j_.is_boolean()) fail("expected a boolean");
    return j_.get<bool>();
  }
  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  Point2 point() const {
    auto xs = items();
    if (xs.size() != 2) fail("expected [x, y]");
    return {xs[0].number(), xs[1].number()};
  }
  std::vector<EntityId> ids() const {
    std::vector<EntityId> out;
    for (auto& n : items()) out.push_back(n.id());
    return out;
  }

 private:
  const json& j_;
  std::string path_;
};

inline Stroke read_stroke(const Node& n) {
  Stroke s;
  s.id = n.at("id").id();
  const std::string mode = n.at("mode").string();
  if (mode == "ink") s.mode = StrokeMode::Ink;
  else if (mode == "gesture") s.mode = StrokeMode::Gesture;
  else n.at("mode").fail("unknown stroke mode '" + mode + "'");
  for (auto& p : n.at("points").items()) s.points.push_back(p.point());
  for (auto& t : n.at("t").items()) s.timestamps.push_back(t.number());
  if (s.points.size() != s.timestamps.size()) n.at("t").fail("need one timestamp per point");
  if (s.points.size() < 2) n.at("points").fail("stroke needs at least 2 points");
  for (std::size_t i = 1; i < s.timestamps.size(); ++i)
    if (s.timestamps[i] < s.timestamps[i - 1]) n.at("t").fail("timestamps decrease");
  if (!(s.length() > 0.0)) n.at("points").fail("stroke has zero path length");
  return s;
}

inline JointKind read_kind(const Node& n) {
  const std::string k = n.string();
  if (k == "revolute") return JointKind::Revolute;
  if (k == "prismatic") return JointKind::Prismatic;
  n.fail("unknown joint kind '" + k + "'");
}

inline std::pair<EntityId, EntityId> read_pair(const Node& n) {
  auto v = n.ids();
  if (v.size() != 2) n.fail("expected two link ids");
  if (v[0] == v[1]) n.fail("joint links must differ");
  return {v[0], v[1]};
}

inline BuildPlan read_plan(const Node& n) {
  BuildPlan p;
  for (auto& l : n.at("links").items())
    p.links.push_back({l.at("id").id(), l.at("strokes").ids(), l.at("color").count()});
  for (auto& j : n.at("joints").items()) {
    JointHypothesis h;
    h.id = j.at("id").id();
    h.kind = read_kind(j.at("kind"));
    std::tie(h.link_a, h.link_b) = read_pair(j.at("links"));
    h.anchor = j.at("anchor").point();
    if (h.kind == JointKind::Prismatic) h.direction = j.at("direction").point();
    p.joints.push_back(h);
  }
  for (EntityId g : n.at("ground").ids()) p.ground.insert(g);
  for (auto& d : n.at("drivers").items()) p.drivers[d.at("joint").id()] = d.at("rate").number();
  return p;
}

inline Mechanism read_mechanism(const Node& n) {
  Mechanism m;
  m.instance = n.at("instance").id();
  m.scale = n.at("scale").number();
  if (!(m.scale > 0.0)) n.at("scale").fail("scale must be positive");
  for (auto& l : n.at("links").items()) {
    RigidLink link;
    link.id = l.at("id").id();
    auto pose = l.at("pose").items();
    if (pose.size() != 3) l.at("pose").fail("expected [x, y, theta]");
    link.pose = {pose[0].number(), pose[1].number(), pose[2].number()};
    link.strokes = l.at("strokes").ids();
    link.is_ground = l.at("ground").boolean();
    m.links.push_back(link);
  }
  for (auto& j : n.at("joints").items()) {
    KinJoint k;
    k.id = j.at("id").id();
    k.kind = read_kind(j.at("kind"));
    std::tie(k.link_a, k.link_b) = read_pair(j.at("links"));
    if (!m.find_link(k.link_a) || !m.find_link(k.link_b)) j.at("links").fail("joint references an unknown link");
    k.anchor_a = j.at("anchor_a").point();
    k.anchor_b = j.at("anchor_b").point();
    if (k.kind == JointKind::Prismatic) {
      k.axis_b = j.at("axis_b").point();
      if (std::abs(norm(k.axis_b) - 1.0) > 1e-9) j.at("axis_b").fail("axis must be a unit vector");
      k.angle_offset = j.at("angle_offset").number();
    }
    if (!j.at("driver").is_null()) k.driver = Driver{j.at("driver").at("rate").number()};
    m.joints.push_back(k);
  }
  for (auto& t : n.at("tracked").items()) {
    TrackedPoint tp{t.at("link").id(), t.at("point").point()};
    if (!m.find_link(tp.link)) t.at("link").fail("tracked point on unknown link");
    m.tracked.push_back(tp);
  }
  return m;
}

}  // namespace detail

inline MechanismState mechanism_state_from_json(const json& j, const std::string& path = "/mechanism") {
  detail::Node n(j, path);
  MechanismState ms;
  ms.plan = detail::read_plan(n.at("plan"));
  ms.built = n.at("built").boolean();
  for (auto& m : n.at("instances").items()) ms.instances.push_back(detail::read_mechanism(m));
  if (!n.at("epsilon").is_null()) ms.epsilon = n.at("epsilon").number();
  return ms;
}

inline std::vector<Stroke> strokes_from_json(const json& j, const std::string& path) {
  std::vector<Stroke> out;
  for (auto& s : detail::Node(j, path).items()) out.push_back(detail::read_stroke(s));
  return out;
}

inline DocumentState document_from_json(const json& j) {
  detail::Node root(j, "");
  if (!j.is_object()) root.fail("expected a top-level object");
  static const std::set<std::string> known{"version", "strokes", "underlays", "decorations", "mechanism"};
  const auto& version = root.at("version");
  if (!version.raw().is_number_integer()) version.fail("version must be an integer");
  if (version.raw().get<long long>() != kFormatVersion)
    throw VersionError("unsupported format version " + version.raw().dump());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw FormatError("unknown top-level key '" + it.key() + "'", "/" + it.key());

  DocumentState d;
  std::set<EntityId> ids;
  EntityId max_id = 0;
  auto claim = [&](EntityId id, const detail::Node& at) {
    if (id == 0) at.fail("ids start at 1");
    if (!ids.insert(id).second) at.fail("duplicate id " + std::to_string(id));
    max_id = std::max(max_id, id);
  };
  for (auto& s : root.at("strokes").items()) {
    d.strokes.push_back(detail::read_stroke(s));
    claim(d.strokes.back().id, s.at("id"));
  }
  std::sort(d.strokes.begin(), d.strokes.end(), [](auto& a, auto& b) { return a.id < b.id; });
  for (auto& u : root.at("underlays").items()) {
    ImageUnderlay x;
    x.id = u.at("id").id();
    claim(x.id, u.at("id"));
    x.image = u.at("image").string();
    x.position = u.at("position").point();
    x.scale = u.at("scale").number();
    if (!(x.scale > 0.0)) u.at("scale").fail("scale must be positive");
    x.rotation = u.at("rotation").number();
    d.underlays.push_back(x);
  }
  for (auto& dn : root.at("decorations").items()) {
    Decoration x;
    x.id = dn.at("id").id();
    claim(x.id, dn.at("id"));
    x.link = dn.at("link").id();
    for (auto& s : dn.at("strokes").items()) {
      x.strokes.push_back(detail::read_stroke(s));
      claim(x.strokes.back().id, s.at("id"));
    }
    d.decorations.push_back(x);
  }
  if (!root.at("mechanism").is_null()) d.mechanism = mechanism_state_from_json(j.at("mechanism"));
  d.next_id = max_id + 1;
  return d;
}

inline DocumentState load_state(std::string_view bytes) {
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what(), "byte " + std::to_string(e.byte));
  }
  return document_from_json(j);
}

inline SketchDocument load(std::string_view bytes) { return SketchDocument(load_state(bytes)); }

}  // namespace sketchlink
