#pragma once

#include <string>

#include "sketchlink/kinematics.hpp"
#include "sketchlink/mechanism.hpp"

namespace sketchlink {

namespace detail {

inline Point2& anchor_on(KinJoint& j, EntityId link) { return j.link_a == link ? j.anchor_a : j.anchor_b; }

}  // namespace detail

/// Drags joint `joint` to `world` (in the pose `q`, or the reference pose
/// when `q` is null) by editing the anchor on link `side` only. That link's
/// inter-anchor distances change; every other link stays rigid and the
/// instance is re-closed with all drivers held. The returned mechanism has
/// the re-closed configuration as its reference pose.
inline Mechanism move_joint(const Mechanism& mech, const PoseVector* q, EntityId joint, Point2 world, EntityId side) {
  const KinJoint* jp = mech.find_joint(joint);
  if (!jp) throw UnknownEntity("no joint " + std::to_string(joint));
  if (side != jp->link_a && side != jp->link_b)
    throw UnknownEntity("link " + std::to_string(side) + " is not part of joint " + std::to_string(joint));
  if (!world.finite()) throw InvalidArgument("joint location must be finite");

  // Instances without a ground are re-closed relative to their first link.
  Mechanism work = mech;
  const bool temporary_ground = work.ground() == nullptr;
  if (temporary_ground) work.links.front().is_ground = true;

  ConstraintSystem before(work);
  const PoseVector current = q ? *q : before.reference();
  if (current.size() != static_cast<Eigen::Index>(before.unknowns())) throw InvalidArgument("pose size mismatch");
  work = with_reference(before, current);
  // Held after angle wrapping so the targets match the rebased frames.
  const ConstraintSystem rebased(work);
  const std::vector<double> hold = rebased.coordinates(rebased.reference());

  RigidLink* link = work.find_link(side);
  const Point2 local = link->pose.inverse_apply(world);
  const double min_gap = 1e-9 * work.scale;
  for (const auto& other : work.joints) {
    if (other.id == joint) continue;
    if (other.link_a == side && distance(other.anchor_a, local) < min_gap)
      throw DegenerateLink("joint would coincide with joint " + std::to_string(other.id) + " on link " +
                           std::to_string(side));
    if (other.link_b == side && distance(other.anchor_b, local) < min_gap)
      throw DegenerateLink("joint would coincide with joint " + std::to_string(other.id) + " on link " +
                           std::to_string(side));
  }
  detail::anchor_on(*work.find_joint(joint), side) = local;

  ConstraintSystem edited(work);
  const PoseVector closed = reassemble(work, &hold);
  Mechanism out = with_reference(edited, closed);
  if (temporary_ground) out.links.front().is_ground = false;
  return out;
}

/// Distances between every pair of joint anchors on `link`, in joint id order.
inline std::vector<double> inter_anchor_distances(const Mechanism& m, EntityId link) {
  std::vector<Point2> anchors;
  for (const auto& j : m.joints) {
    if (j.link_a == link) anchors.push_back(j.anchor_a);
    if (j.link_b == link) anchors.push_back(j.anchor_b);
  }
  std::vector<double> d;
  for (std::size_t i = 0; i < anchors.size(); ++i)
    for (std::size_t k = i + 1; k < anchors.size(); ++k) d.push_back(distance(anchors[i], anchors[k]));
  return d;
}

}  // namespace sketchlink
