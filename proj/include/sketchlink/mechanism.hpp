#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sketchlink/errors.hpp"
#include "sketchlink/geometry.hpp"
#include "sketchlink/recognition.hpp"
#include "sketchlink/union_find.hpp"

namespace sketchlink {

struct RigidLink {
  EntityId id = 0;
  Pose pose;  // reference placement; identity at build
  std::vector<EntityId> strokes;
  bool is_ground = false;

  friend bool operator==(const RigidLink&, const RigidLink&) = default;
};

/// Positive rate is counter-clockwise rotation of link_b relative to link_a
/// (Revolute) or motion of link_a's anchor along +axis (Prismatic).
struct Driver {
  double rate = kDefaultDriverRate;
  friend bool operator==(const Driver&, const Driver&) = default;
};

struct KinJoint {
  EntityId id = 0;
  JointKind kind = JointKind::Revolute;
  EntityId link_a = 0;
  EntityId link_b = 0;
  Point2 anchor_a;  // in link_a's local frame
  Point2 anchor_b;  // in link_b's local frame
  Point2 axis_b;    // Prismatic: unit slide direction in link_b's frame
  double angle_offset = 0.0;  // Prismatic: locked theta_b - theta_a
  std::optional<Driver> driver;  // present iff this is an input joint

  bool is_input() const { return driver.has_value(); }
  friend bool operator==(const KinJoint&, const KinJoint&) = default;
};

/// A point of interest riding on a link, in that link's local frame.
struct TrackedPoint {
  EntityId link = 0;
  Point2 local;
  friend bool operator==(const TrackedPoint&, const TrackedPoint&) = default;
};

struct Mechanism {
  EntityId instance = 0;  // lowest link id in the instance
  std::vector<RigidLink> links;  // ascending id
  std::vector<KinJoint> joints;  // ascending id
  std::vector<TrackedPoint> tracked;
  double scale = 1.0;  // scene diagonal used for tolerances

  friend bool operator==(const Mechanism&, const Mechanism&) = default;

  const RigidLink* find_link(EntityId id) const {
    auto it = std::find_if(links.begin(), links.end(), [&](const auto& l) { return l.id == id; });
    return it == links.end() ? nullptr : &*it;
  }
  RigidLink* find_link(EntityId id) {
    return const_cast<RigidLink*>(std::as_const(*this).find_link(id));
  }
  const KinJoint* find_joint(EntityId id) const {
    auto it = std::find_if(joints.begin(), joints.end(), [&](const auto& j) { return j.id == id; });
    return it == joints.end() ? nullptr : &*it;
  }
  KinJoint* find_joint(EntityId id) {
    return const_cast<KinJoint*>(std::as_const(*this).find_joint(id));
  }
  const RigidLink* ground() const {
    for (const auto& l : links)
      if (l.is_ground) return &l;
    return nullptr;
  }
  std::size_t driver_count() const {
    return static_cast<std::size_t>(std::count_if(joints.begin(), joints.end(), [](const auto& j) { return j.is_input(); }));
  }
};

/// Planar Gruebler-Kutzbach count 3(n-1) - 2j. Both joint kinds remove two
/// degrees of freedom.
inline int mobility(const Mechanism& m) {
  const int n = static_cast<int>(m.links.size());
  const int j = static_cast<int>(m.joints.size());
  return 3 * (n - 1) - 2 * j;
}

struct BuildWarning {
  EntityId entity = 0;
  std::string code;  // NoGround, DroppedJoint, DroppedTrackedPoint, ...
  std::string message;
};

/// Splits a flat set of links and joints into connected instances. Joints
/// whose links are missing are dropped with a warning.
inline std::vector<Mechanism> partition_instances(std::vector<RigidLink> links, std::vector<KinJoint> joints,
                                                  std::vector<TrackedPoint> tracked, double scale,
                                                  std::vector<BuildWarning>* warnings = nullptr) {
  std::sort(links.begin(), links.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(joints.begin(), joints.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::map<EntityId, std::size_t> index;
  for (std::size_t i = 0; i < links.size(); ++i) index[links[i].id] = i;

  UnionFind uf(links.size());
  std::vector<KinJoint> kept;
  for (auto& j : joints) {
    auto ia = index.find(j.link_a);
    auto ib = index.find(j.link_b);
    if (ia == index.end() || ib == index.end() || j.link_a == j.link_b) {
      if (warnings)
        warnings->push_back({j.id, "DroppedJoint", "joint " + std::to_string(j.id) + " lost one of its links"});
      continue;
    }
    uf.unite(ia->second, ib->second);
    kept.push_back(std::move(j));
  }

  std::map<std::size_t, Mechanism> by_root;
  for (std::size_t i = 0; i < links.size(); ++i) by_root[uf.find(i)].links.push_back(links[i]);
  for (auto& j : kept) by_root[uf.find(index[j.link_a])].joints.push_back(std::move(j));
  for (auto& tp : tracked) {
    auto it = index.find(tp.link);
    if (it == index.end()) {
      if (warnings)
        warnings->push_back({tp.link, "DroppedTrackedPoint", "tracked point lost its link " + std::to_string(tp.link)});
      continue;
    }
    by_root[uf.find(it->second)].tracked.push_back(tp);
  }

  std::vector<Mechanism> out;
  for (auto& [root, m] : by_root) {
    m.instance = m.links.front().id;
    m.scale = scale;
    // Keep a single ground per instance: the lowest-id one wins.
    bool seen_ground = false;
    for (auto& l : m.links) {
      if (l.is_ground && seen_ground) l.is_ground = false;
      seen_ground = seen_ground || l.is_ground;
    }
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.instance < b.instance; });
  return out;
}

/// Exchanges the two sides of a joint. `pa` / `pb` are the reference poses
/// of link_a / link_b; prismatic axes move into the new link_b frame.
inline void swap_sides(KinJoint& j, const Pose& pa, const Pose& pb) {
  if (j.kind == JointKind::Prismatic) j.axis_b = pa.inverse_direction(pb.apply_direction(j.axis_b));
  std::swap(j.link_a, j.link_b);
  std::swap(j.anchor_a, j.anchor_b);
  j.angle_offset = -j.angle_offset;
}

/// Orients every joint touching the ground so the ground is link_a. Driver
/// coordinates are then measured relative to the fixed link.
inline void orient_ground_first(Mechanism& m) {
  const RigidLink* g = m.ground();
  if (!g) return;
  const EntityId gid = g->id;
  for (auto& j : m.joints)
    if (j.link_b == gid && j.link_a != gid) swap_sides(j, m.find_link(j.link_a)->pose, m.find_link(j.link_b)->pose);
}

struct BuildResult {
  std::vector<Mechanism> mechanisms;
  std::vector<BuildWarning> warnings;
};

/// Builds kinematic instances from recognized hypotheses. Every link starts
/// at the identity pose, so link-local anchors equal the recognized world
/// anchors. Instances without a ground are built but flagged.
inline BuildResult build_mechanisms(const BuildPlan& plan, double scale) {
  BuildResult r;
  std::vector<RigidLink> links;
  for (const auto& h : plan.links) links.push_back({h.id, Pose{}, h.strokes, plan.ground.contains(h.id)});
  std::vector<KinJoint> joints;
  for (const auto& h : plan.joints) {
    if (!plan.find_link(h.link_a) || !plan.find_link(h.link_b))
      throw UnknownEntity("joint " + std::to_string(h.id) + " references a missing link");
    KinJoint j;
    j.id = h.id;
    j.kind = h.kind;
    j.link_a = h.link_a;
    j.link_b = h.link_b;
    j.anchor_a = h.anchor;
    j.anchor_b = h.anchor;
    if (h.kind == JointKind::Prismatic) j.axis_b = h.direction / norm(h.direction);
    if (auto it = plan.drivers.find(h.id); it != plan.drivers.end()) j.driver = Driver{it->second};
    joints.push_back(j);
  }
  r.mechanisms = partition_instances(std::move(links), std::move(joints), {}, scale, &r.warnings);
  for (auto& m : r.mechanisms) orient_ground_first(m);
  for (const auto& m : r.mechanisms)
    if (!m.ground() && !m.joints.empty())
      r.warnings.push_back({m.instance, "NoGround", "instance " + std::to_string(m.instance) + " has no ground link"});
  return r;
}

/// Re-applies ground / input / driver marks from the plan onto built
/// mechanisms without touching geometry.
inline void apply_marks(const BuildPlan& plan, std::vector<Mechanism>& mechs) {
  for (auto& m : mechs) {
    for (auto& l : m.links) l.is_ground = plan.ground.contains(l.id);
    orient_ground_first(m);
    for (auto& j : m.joints) {
      if (auto it = plan.drivers.find(j.id); it != plan.drivers.end()) j.driver = Driver{it->second};
      else j.driver.reset();
    }
  }
}

inline void trace_point(Mechanism& m, EntityId link, Point2 local) {
  if (!m.find_link(link)) throw UnknownEntity("no link " + std::to_string(link));
  if (!local.finite()) throw InvalidArgument("tracked point must be finite");
  m.tracked.push_back({link, local});
}

/// Registers a tracked point given in world coordinates at the link's reference pose.
inline TrackedPoint trace_world_point(Mechanism& m, EntityId link, Point2 world) {
  const auto* l = m.find_link(link);
  if (!l) throw UnknownEntity("no link " + std::to_string(link));
  TrackedPoint tp{link, l->pose.inverse_apply(world)};
  trace_point(m, link, tp.local);
  return tp;
}

/// Maps each old link onto the new hypothesis that contains its surviving
/// strokes. Absorbed links are re-expressed in the survivor's frame; joints
/// between merged links and joints on vanished links are dropped.
inline BuildResult rebind_after_sketch(const std::vector<Mechanism>& mechs, std::span<const LinkHypothesis> hyps) {
  std::map<EntityId, const LinkHypothesis*> hyp_of_stroke;
  for (const auto& h : hyps)
    for (EntityId s : h.strokes) hyp_of_stroke[s] = &h;

  BuildResult r;
  double scale = 1.0;
  std::map<EntityId, EntityId> new_id;  // old link -> new link
  std::map<EntityId, RigidLink> merged;  // new link id -> link
  std::map<EntityId, Pose> old_pose;
  std::set<EntityId> claimed_hyps;
  for (const auto& m : mechs) {
    scale = m.scale;
    for (const auto& l : m.links) {
      old_pose[l.id] = l.pose;
      const LinkHypothesis* target = nullptr;
      for (EntityId s : l.strokes) {
        auto it = hyp_of_stroke.find(s);
        if (it != hyp_of_stroke.end()) {
          target = it->second;
          break;
        }
      }
      if (!target) {
        r.warnings.push_back({l.id, "DroppedLink", "all strokes of link " + std::to_string(l.id) + " were removed"});
        continue;
      }
      new_id[l.id] = target->id;
      claimed_hyps.insert(target->id);
      auto [it, fresh] = merged.try_emplace(target->id, RigidLink{target->id, l.pose, target->strokes, l.is_ground});
      if (!fresh) it->second.is_ground = it->second.is_ground || l.is_ground;
    }
  }
  // Brand new links (strokes never seen before) enter at identity.
  for (const auto& h : hyps)
    if (!claimed_hyps.contains(h.id)) merged.emplace(h.id, RigidLink{h.id, Pose{}, h.strokes, false});

  auto relocate = [&](EntityId old_link, Point2 local) {
    const Pose& from = old_pose.at(old_link);
    const Pose& to = merged.at(new_id.at(old_link)).pose;
    return from == to ? local : to.inverse_apply(from.apply(local));
  };

  std::vector<KinJoint> joints;
  for (const auto& m : mechs) {
    for (auto j : m.joints) {
      auto ia = new_id.find(j.link_a);
      auto ib = new_id.find(j.link_b);
      if (ia == new_id.end() || ib == new_id.end()) {
        r.warnings.push_back({j.id, "DroppedJoint", "joint " + std::to_string(j.id) + " lost one of its links"});
        continue;
      }
      if (ia->second == ib->second) {
        r.warnings.push_back({j.id, "DroppedJoint", "joint " + std::to_string(j.id) + " joins a link to itself after regrouping"});
        continue;
      }
      j.anchor_a = relocate(j.link_a, j.anchor_a);
      j.anchor_b = relocate(j.link_b, j.anchor_b);
      if (j.kind == JointKind::Prismatic) {
        const Pose& from_b = old_pose.at(j.link_b);
        const Pose& to_b = merged.at(ib->second).pose;
        j.axis_b = to_b.inverse_direction(from_b.apply_direction(j.axis_b));
      }
      j.link_a = ia->second;
      j.link_b = ib->second;
      joints.push_back(j);
    }
  }
  std::vector<TrackedPoint> tracked;
  for (const auto& m : mechs) {
    for (auto tp : m.tracked) {
      if (!new_id.contains(tp.link)) {
        r.warnings.push_back({tp.link, "DroppedTrackedPoint", "tracked point lost link " + std::to_string(tp.link)});
        continue;
      }
      tp.local = relocate(tp.link, tp.local);
      tp.link = new_id.at(tp.link);
      tracked.push_back(tp);
    }
  }
  std::vector<RigidLink> links;
  for (auto& [id, l] : merged) links.push_back(std::move(l));
  r.mechanisms = partition_instances(std::move(links), std::move(joints), std::move(tracked), scale, &r.warnings);
  return r;
}

/// Single-instance convenience form.
inline Mechanism rebind_after_sketch(const Mechanism& mech, std::span<const LinkHypothesis> hyps,
                                     std::vector<BuildWarning>* warnings = nullptr) {
  // Only the hypotheses that overlap this instance's strokes are relevant.
  std::set<EntityId> own;
  for (const auto& l : mech.links) own.insert(l.strokes.begin(), l.strokes.end());
  std::vector<LinkHypothesis> relevant;
  for (const auto& h : hyps)
    if (std::any_of(h.strokes.begin(), h.strokes.end(), [&](EntityId s) { return own.contains(s); }))
      relevant.push_back(h);
  BuildResult r = rebind_after_sketch(std::vector<Mechanism>{mech}, relevant);
  if (warnings) warnings->insert(warnings->end(), r.warnings.begin(), r.warnings.end());
  if (r.mechanisms.empty()) {
    Mechanism empty;
    empty.instance = mech.instance;
    empty.scale = mech.scale;
    return empty;
  }
  if (r.mechanisms.size() == 1) return r.mechanisms.front();
  // Dropping joints split the instance; keep everything in one value.
  Mechanism all = r.mechanisms.front();
  for (std::size_t i = 1; i < r.mechanisms.size(); ++i) {
    auto& m = r.mechanisms[i];
    all.links.insert(all.links.end(), m.links.begin(), m.links.end());
    all.joints.insert(all.joints.end(), m.joints.begin(), m.joints.end());
    all.tracked.insert(all.tracked.end(), m.tracked.begin(), m.tracked.end());
  }
  std::sort(all.links.begin(), all.links.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::sort(all.joints.begin(), all.joints.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return all;
}

/// Rebinds plan joints onto new hypotheses by stroke membership.
inline BuildPlan rebind_plan(const BuildPlan& plan, std::span<const LinkHypothesis> hyps,
                             std::vector<BuildWarning>* warnings = nullptr) {
  std::map<EntityId, EntityId> stroke_to_new;
  for (const auto& h : hyps)
    for (EntityId s : h.strokes) stroke_to_new[s] = h.id;
  std::map<EntityId, EntityId> link_map;
  for (const auto& l : plan.links)
    for (EntityId s : l.strokes)
      if (auto it = stroke_to_new.find(s); it != stroke_to_new.end()) {
        link_map[l.id] = it->second;
        break;
      }
  BuildPlan out;
  out.links.assign(hyps.begin(), hyps.end());
  for (auto j : plan.joints) {
    auto ia = link_map.find(j.link_a);
    auto ib = link_map.find(j.link_b);
    if (ia == link_map.end() || ib == link_map.end() || ia->second == ib->second) {
      if (warnings) warnings->push_back({j.id, "DroppedJoint", "joint " + std::to_string(j.id) + " no longer joins two links"});
      continue;
    }
    j.link_a = std::min(ia->second, ib->second);
    j.link_b = std::max(ia->second, ib->second);
    out.joints.push_back(j);
  }
  for (EntityId g : plan.ground)
    if (auto it = link_map.find(g); it != link_map.end()) out.ground.insert(it->second);
  for (auto [jid, rate] : plan.drivers)
    if (out.find_joint(jid)) out.drivers[jid] = rate;
  return out;
}

// ---------------------------------------------------------------------------
// Four-bar classification for reports.

/// Distance between the two joint anchors of a link, when it has exactly two.
inline std::optional<double> link_length(const Mechanism& m, EntityId link) {
  std::vector<Point2> anchors;
  for (const auto& j : m.joints) {
    if (j.link_a == link) anchors.push_back(j.anchor_a);
    if (j.link_b == link) anchors.push_back(j.anchor_b);
  }
  if (anchors.size() != 2) return std::nullopt;
  return distance(anchors[0], anchors[1]);
}

struct GrashofReport {
  bool grashof = false;
  std::string type;  // crank-rocker, double-crank, double-rocker, change-point, triple-rocker
  double shortest = 0, longest = 0, p = 0, q = 0;
};

/// Classifies a single-loop four-bar of revolute joints. Returns nullopt for
/// any other topology.
inline std::optional<GrashofReport> classify_four_bar(const Mechanism& m) {
  if (m.links.size() != 4 || m.joints.size() != 4) return std::nullopt;
  for (const auto& j : m.joints)
    if (j.kind != JointKind::Revolute) return std::nullopt;
  const RigidLink* ground = m.ground();
  if (!ground) return std::nullopt;
  std::vector<std::pair<double, EntityId>> lengths;
  for (const auto& l : m.links) {
    auto len = link_length(m, l.id);
    if (!len) return std::nullopt;
    lengths.push_back({*len, l.id});
  }
  std::sort(lengths.begin(), lengths.end());
  GrashofReport r;
  r.shortest = lengths[0].first;
  r.p = lengths[1].first;
  r.q = lengths[2].first;
  r.longest = lengths[3].first;
  const double lhs = r.shortest + r.longest;
  const double rhs = r.p + r.q;
  const double tol = 1e-9 * std::max(1.0, rhs);
  if (lhs > rhs + tol) {
    r.grashof = false;
    r.type = "triple-rocker";
    return r;
  }
  r.grashof = true;
  if (std::abs(lhs - rhs) <= tol) {
    r.type = "change-point";
    return r;
  }
  const EntityId s = lengths[0].second;
  bool adjacent_to_ground = false;
  for (const auto& j : m.joints)
    if ((j.link_a == s && j.link_b == ground->id) || (j.link_b == s && j.link_a == ground->id)) adjacent_to_ground = true;
  if (s == ground->id) r.type = "double-crank";
  else if (adjacent_to_ground) r.type = "crank-rocker";
  else r.type = "double-rocker";
  return r;
}

}  // namespace sketchlink
