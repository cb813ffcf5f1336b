#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sketchlink/errors.hpp"
#include "sketchlink/geometry.hpp"
#include "sketchlink/mechanism.hpp"

namespace sketchlink {

/// Flat (x, y, theta) per non-ground link, links ordered by ascending id.
using PoseVector = Eigen::VectorXd;

struct SolverConfig {
  double tolerance_factor = 1e-9;      // converged when |F| <= factor * scene diagonal
  int max_iterations = 50;
  int max_halvings = 8;
  double singular_condition = 1e12;    // Jacobian condition estimate threshold
  int limit_refinements = 60;          // bisections used to pin down a locking coordinate
  double limit_resolution = 1e-12;     // driver-coordinate width at which refinement stops
};

enum class SimStatus { Ok, Singular, Locked, Diverged };

inline const char* to_string(SimStatus s) {
  switch (s) {
    case SimStatus::Ok: return "ok";
    case SimStatus::Singular: return "singular";
    case SimStatus::Locked: return "locked";
    default: return "diverged";
  }
}

struct SimState {
  double t = 0.0;
  PoseVector q;
  std::vector<double> drive;  // current driver coordinates, joint id order
  SimStatus status = SimStatus::Ok;
  int iterations = 0;
  double residual_norm = 0.0;
  std::vector<double> blocked_at;  // first unreachable driver coordinates (Locked/Diverged)

  bool ok() const { return status == SimStatus::Ok; }
};

/// Assembled position-level constraint system of one mechanism instance.
///
/// Rows, joints in ascending id order: two per revolute (anchor
/// co-location), two per prismatic (relative angle lock, anchor on slide
/// line), then one per driver. Angular rows are multiplied by the scene
/// diagonal so every row is a length and one tolerance applies to all.
class ConstraintSystem {
 public:
  ConstraintSystem() = default;

  /// Builds the equations without checking driver counts.
  explicit ConstraintSystem(const Mechanism& mech, SolverConfig cfg = {}) : mech_(mech), cfg_(cfg) {
    const RigidLink* g = mech_.ground();
    if (!g) throw NoGround("instance " + std::to_string(mech_.instance) + " has no ground link");
    ground_ = g->id;
    ground_pose_ = g->pose;
    int col = 0;
    for (const auto& l : mech_.links) {
      if (l.id == ground_) continue;
      column_[l.id] = col;
      moving_.push_back(l.id);
      col += 3;
    }
    for (const auto& j : mech_.joints) {
      if (!column_.contains(j.link_a) && j.link_a != ground_) throw UnknownEntity("joint link missing");
      if (!column_.contains(j.link_b) && j.link_b != ground_) throw UnknownEntity("joint link missing");
      if (j.driver) {
        drivers_.push_back(j.id);
        rates_.push_back(j.driver->rate);
      }
    }
  }

  const Mechanism& mechanism() const { return mech_; }
  const SolverConfig& config() const { return cfg_; }
  double scale() const { return mech_.scale; }
  double tolerance() const { return cfg_.tolerance_factor * mech_.scale; }
  std::size_t unknowns() const { return 3 * moving_.size(); }
  std::size_t equations() const { return 2 * mech_.joints.size() + drivers_.size(); }
  bool square() const { return unknowns() == equations(); }
  const std::vector<EntityId>& moving_links() const { return moving_; }
  const std::vector<EntityId>& driver_joints() const { return drivers_; }
  const std::vector<double>& rates() const { return rates_; }
  void set_rates(std::vector<double> r) {
    if (r.size() != rates_.size()) throw InvalidArgument("rate count does not match driver count");
    rates_ = std::move(r);
  }
  EntityId ground() const { return ground_; }

  /// Reference placement of every moving link.
  PoseVector reference() const {
    PoseVector q(unknowns());
    for (std::size_t i = 0; i < moving_.size(); ++i) {
      const Pose& p = mech_.find_link(moving_[i])->pose;
      q.segment<3>(3 * i) << p.x, p.y, p.theta;
    }
    return q;
  }

  Pose pose(const PoseVector& q, EntityId link) const {
    if (link == ground_) return ground_pose_;
    auto it = column_.find(link);
    if (it == column_.end()) throw UnknownEntity("no link " + std::to_string(link));
    return {q[it->second], q[it->second + 1], q[it->second + 2]};
  }

  Point2 world(const PoseVector& q, const TrackedPoint& tp) const { return pose(q, tp.link).apply(tp.local); }

  /// Driver coordinate: relative angle theta_b - theta_a for revolute inputs,
  /// signed slide of anchor_a along the axis for prismatic inputs.
  double coordinate(const PoseVector& q, const KinJoint& j) const {
    const Pose pa = pose(q, j.link_a);
    const Pose pb = pose(q, j.link_b);
    if (j.kind == JointKind::Revolute) return pb.theta - pa.theta;
    const Point2 u = pb.apply_direction(j.axis_b);
    return dot(u, pa.apply(j.anchor_a) - pb.apply(j.anchor_b));
  }

  std::vector<double> coordinates(const PoseVector& q) const {
    std::vector<double> c;
    for (EntityId id : drivers_) c.push_back(coordinate(q, *mech_.find_joint(id)));
    return c;
  }

  const KinJoint& driver_joint(std::size_t k) const { return *mech_.find_joint(drivers_.at(k)); }
  bool driver_is_angular(std::size_t k) const { return driver_joint(k).kind == JointKind::Revolute; }

  Eigen::VectorXd residual(const PoseVector& q, const std::vector<double>& targets) const {
    Eigen::VectorXd f(equations());
    const double L = mech_.scale;
    Eigen::Index r = 0;
    for (const auto& j : mech_.joints) {
      const Pose pa = pose(q, j.link_a);
      const Pose pb = pose(q, j.link_b);
      const Point2 wa = pa.apply(j.anchor_a);
      const Point2 wb = pb.apply(j.anchor_b);
      if (j.kind == JointKind::Revolute) {
        f[r++] = wa.x - wb.x;
        f[r++] = wa.y - wb.y;
      } else {
        f[r++] = L * (pb.theta - pa.theta - j.angle_offset);
        f[r++] = cross(pb.apply_direction(j.axis_b), wa - wb);
      }
    }
    for (std::size_t k = 0; k < drivers_.size(); ++k) {
      const KinJoint& j = driver_joint(k);
      const double w = j.kind == JointKind::Revolute ? L : 1.0;
      f[r++] = w * (coordinate(q, j) - targets.at(k));
    }
    return f;
  }

  Eigen::MatrixXd jacobian(const PoseVector& q) const {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(equations(), unknowns());
    const double L = mech_.scale;
    auto col = [&](EntityId link) -> int {
      auto it = column_.find(link);
      return it == column_.end() ? -1 : it->second;
    };
    // Adds d(row)/d(x, y, theta) of `link`.
    auto put = [&](Eigen::Index row, EntityId link, double dx, double dy, double dth) {
      const int c = col(link);
      if (c < 0) return;
      J(row, c) += dx;
      J(row, c + 1) += dy;
      J(row, c + 2) += dth;
    };
    Eigen::Index r = 0;
    for (const auto& j : mech_.joints) {
      const Pose pa = pose(q, j.link_a);
      const Pose pb = pose(q, j.link_b);
      const Point2 ra = pa.apply_direction(j.anchor_a);  // R_a * anchor_a
      const Point2 rb = pb.apply_direction(j.anchor_b);
      const Point2 dra = perp(ra);  // d(R_a anchor_a)/d theta_a
      const Point2 drb = perp(rb);
      if (j.kind == JointKind::Revolute) {
        put(r, j.link_a, 1, 0, dra.x);
        put(r, j.link_b, -1, 0, -drb.x);
        put(r + 1, j.link_a, 0, 1, dra.y);
        put(r + 1, j.link_b, 0, -1, -drb.y);
        r += 2;
      } else {
        const Point2 u = pb.apply_direction(j.axis_b);
        const Point2 d = pa.apply(j.anchor_a) - pb.apply(j.anchor_b);
        put(r, j.link_a, 0, 0, -L);
        put(r, j.link_b, 0, 0, L);
        put(r + 1, j.link_a, -u.y, u.x, cross(u, dra));
        put(r + 1, j.link_b, u.y, -u.x, cross(perp(u), d) - cross(u, drb));
        r += 2;
      }
    }
    for (std::size_t k = 0; k < drivers_.size(); ++k) {
      const KinJoint& j = driver_joint(k);
      if (j.kind == JointKind::Revolute) {
        put(r, j.link_a, 0, 0, -L);
        put(r, j.link_b, 0, 0, L);
      } else {
        const Pose pa = pose(q, j.link_a);
        const Pose pb = pose(q, j.link_b);
        const Point2 u = pb.apply_direction(j.axis_b);
        const Point2 d = pa.apply(j.anchor_a) - pb.apply(j.anchor_b);
        const Point2 dra = perp(pa.apply_direction(j.anchor_a));
        const Point2 drb = perp(pb.apply_direction(j.anchor_b));
        put(r, j.link_a, u.x, u.y, dot(u, dra));
        put(r, j.link_b, -u.x, -u.y, dot(perp(u), d) - dot(u, drb));
      }
      ++r;
    }
    return J;
  }

  /// d(residual)/d(target_k) is -w_k on driver row k; this returns w_k.
  double driver_row_weight(std::size_t k) const { return driver_is_angular(k) ? mech_.scale : 1.0; }

  /// Initial state at the reference pose with t = 0.
  SimState initial_state() const {
    SimState s;
    s.q = reference();
    s.drive = coordinates(s.q);
    s.residual_norm = residual(s.q, s.drive).norm();
    return s;
  }

 private:
  Mechanism mech_;
  SolverConfig cfg_;
  EntityId ground_ = 0;
  Pose ground_pose_;
  std::map<EntityId, int> column_;
  std::vector<EntityId> moving_;
  std::vector<EntityId> drivers_;
  std::vector<double> rates_;
};

/// Validated system ready for simulation: one ground and exactly as many
/// drivers as degrees of freedom.
inline ConstraintSystem assemble(const Mechanism& mech, SolverConfig cfg = {}) {
  if (!mech.ground()) throw NoGround("instance " + std::to_string(mech.instance) + " has no ground link");
  const int m = mobility(mech);
  const int d = static_cast<int>(mech.driver_count());
  if (m <= 0) throw InvalidInput("mechanism is a structure (mobility " + std::to_string(m) + ")");
  if (d < m)
    throw Underdriven("mobility " + std::to_string(m) + " needs " + std::to_string(m) + " drivers, got " +
                      std::to_string(d));
  if (d > m)
    throw Overdriven("mobility " + std::to_string(m) + " allows " + std::to_string(m) + " drivers, got " +
                     std::to_string(d));
  return ConstraintSystem(mech, cfg);
}

// ---------------------------------------------------------------------------
// Newton iteration

struct NewtonResult {
  PoseVector q;
  bool converged = false;
  bool finite = true;
  int iterations = 0;
  double residual = 0.0;
};

/// Newton-Raphson from `guess` towards F(q, targets) = 0. Square systems use
/// LU with partial pivoting; rectangular ones use the minimum-norm least
/// squares step. After meeting the tolerance a couple of extra steps polish
/// the root while they still help.
inline NewtonResult newton(const ConstraintSystem& sys, PoseVector guess, const std::vector<double>& targets) {
  const auto& cfg = sys.config();
  const double tol = sys.tolerance();
  NewtonResult res;
  res.q = std::move(guess);
  Eigen::VectorXd f = sys.residual(res.q, targets);
  res.residual = f.norm();
  int polish = 0;
  while (true) {
    if (!std::isfinite(res.residual)) {
      res.finite = false;
      return res;
    }
    if (res.residual <= tol) {
      res.converged = true;
      if (polish >= 2 || res.residual == 0.0) return res;
    }
    if (res.iterations >= cfg.max_iterations) return res;

    const Eigen::MatrixXd J = sys.jacobian(res.q);
    Eigen::VectorXd step;
    if (sys.square()) {
      step = Eigen::PartialPivLU<Eigen::MatrixXd>(J).solve(-f);
    } else {
      step = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(J).solve(-f);
    }
    PoseVector next = res.q + step;
    Eigen::VectorXd fn = sys.residual(next, targets);
    const double rn = fn.norm();
    ++res.iterations;
    if (res.converged) {
      // Polishing: accept only improvements.
      ++polish;
      if (!(rn < res.residual)) return res;
    }
    if (!step.allFinite()) {
      res.finite = false;
      return res;
    }
    res.q = std::move(next);
    f = std::move(fn);
    res.residual = rn;
  }
}

inline double condition_estimate(const Eigen::MatrixXd& J) {
  if (J.rows() == 0) return 1.0;
  const double rc = Eigen::PartialPivLU<Eigen::MatrixXd>(J).rcond();
  return rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
}

namespace detail {

/// One attempt from a converged state to new driver targets: tangent
/// predictor first, plain warm start as fallback.
inline NewtonResult attempt(const ConstraintSystem& sys, const SimState& from, const std::vector<double>& targets) {
  NewtonResult best;
  if (sys.square() && !from.drive.empty()) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.equations()));
    const Eigen::Index first_driver = static_cast<Eigen::Index>(sys.equations() - from.drive.size());
    for (std::size_t k = 0; k < from.drive.size(); ++k)
      rhs[first_driver + static_cast<Eigen::Index>(k)] = sys.driver_row_weight(k) * (targets[k] - from.drive[k]);
    const Eigen::VectorXd dq = Eigen::PartialPivLU<Eigen::MatrixXd>(sys.jacobian(from.q)).solve(rhs);
    if (dq.allFinite()) {
      best = newton(sys, from.q + dq, targets);
      if (best.converged) return best;
    }
  }
  NewtonResult plain = newton(sys, from.q, targets);
  if (plain.converged || !best.finite || best.iterations == 0) return plain;
  if (!plain.finite) return best;
  return plain;
}

inline std::vector<double> lerp(const std::vector<double>& a, const std::vector<double>& b, double s) {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = s >= 1.0 ? b[k] : a[k] + s * (b[k] - a[k]);
  return out;
}

}  // namespace detail

/// Moves the driver coordinates from `state.drive` to `targets`, with time
/// running linearly from state.t to t_next. Failed steps are bisected; when
/// the halvings run out the reachable limit is located by bisection and the
/// state stops there as Locked (bounded residual) or Diverged.
inline SimState advance(const ConstraintSystem& sys, const SimState& state, const std::vector<double>& targets,
                        double t_next) {
  const auto& cfg = sys.config();
  const std::vector<double> start = state.drive;
  const double t0 = state.t;
  SimState cur = state;
  double s_cur = 0.0;
  double h = 1.0;
  int halvings = 0;
  bool bounded = true;

  auto accept = [&](const NewtonResult& nr, double s) {
    cur.q = nr.q;
    cur.drive = detail::lerp(start, targets, s);
    cur.t = s >= 1.0 ? t_next : t0 + s * (t_next - t0);
    cur.iterations = nr.iterations;
    cur.residual_norm = nr.residual;
    cur.blocked_at.clear();
  };
  auto singular = [&]() {
    return sys.square() && condition_estimate(sys.jacobian(cur.q)) > cfg.singular_condition;
  };

  while (s_cur < 1.0) {
    const double s_try = std::min(1.0, s_cur + h);
    const NewtonResult nr = detail::attempt(sys, cur, detail::lerp(start, targets, s_try));
    if (nr.converged) {
      accept(nr, s_try);
      s_cur = s_try;
      if (singular()) {
        cur.status = SimStatus::Singular;
        return cur;
      }
      continue;
    }
    bounded = bounded && nr.finite && nr.residual <= 10.0 * sys.scale();
    if (halvings >= cfg.max_halvings) {
      // Pin the limit between the last reachable and first unreachable point.
      double lo = s_cur, hi = s_try;
      double span = 0.0;
      for (std::size_t k = 0; k < start.size(); ++k) span = std::max(span, std::abs(targets[k] - start[k]));
      for (int i = 0; i < cfg.limit_refinements && (hi - lo) * span > cfg.limit_resolution; ++i) {
        const double mid = 0.5 * (lo + hi);
        const NewtonResult probe = detail::attempt(sys, cur, detail::lerp(start, targets, mid));
        if (probe.converged) {
          accept(probe, mid);
          lo = mid;
        } else {
          hi = mid;
        }
      }
      cur.status = bounded ? SimStatus::Locked : SimStatus::Diverged;
      cur.blocked_at = detail::lerp(start, targets, hi);
      return cur;
    }
    h *= 0.5;
    ++halvings;
  }
  cur.status = SimStatus::Ok;
  return cur;
}

/// Advances every driver by rate * (t_next - t) from a converged state.
inline SimState solve_step(const ConstraintSystem& sys, const SimState& state, double t_next) {
  if (!state.ok()) return state;
  std::vector<double> targets = state.drive;
  for (std::size_t k = 0; k < targets.size(); ++k) targets[k] += sys.rates()[k] * (t_next - state.t);
  return advance(sys, state, targets, t_next);
}

// ---------------------------------------------------------------------------
// Traces

struct TraceSample {
  double t = 0.0;
  Point2 p;
  friend bool operator==(const TraceSample&, const TraceSample&) = default;
};

struct Trace {
  TrackedPoint point;
  std::vector<TraceSample> samples;
  bool closed = false;
  friend bool operator==(const Trace&, const Trace&) = default;
};

inline std::vector<Trace> make_traces(const Mechanism& m) {
  std::vector<Trace> out;
  for (const auto& tp : m.tracked) out.push_back({tp, {}, false});
  return out;
}

/// Appends one sample per trace for an Ok state, skipping exact repeats.
inline void record(const ConstraintSystem& sys, const SimState& s, std::vector<Trace>& traces) {
  if (!s.ok()) return;
  for (auto& tr : traces) {
    const TraceSample smp{s.t, sys.world(s.q, tr.point)};
    if (!tr.samples.empty() && tr.samples.back() == smp) continue;
    tr.samples.push_back(smp);
  }
}

inline void mark_closed_if_full_turn(const ConstraintSystem& sys, const std::vector<double>& from,
                                     const std::vector<double>& to, std::vector<Trace>& traces) {
  for (std::size_t k = 0; k < from.size(); ++k)
    if (sys.driver_is_angular(k) && std::abs(to[k] - from[k]) >= 2.0 * std::numbers::pi - 1e-9)
      for (auto& tr : traces) tr.closed = true;
}

// ---------------------------------------------------------------------------
// Runs

struct RunOptions {
  double duration = 0.0;
  double dt = 0.0;
  std::optional<std::vector<double>> rates;  // overrides the mechanism's driver rates
};

struct RunOutcome {
  SimState final;
  std::size_t ok_steps = 0;
  bool interrupted = false;
};

/// Default step: one degree of travel on the first driver (revolute), or
/// 1/360 of the scene diagonal (prismatic).
inline double default_dt(const ConstraintSystem& sys) {
  if (sys.rates().empty() || sys.rates()[0] == 0.0) return 1.0;
  const double travel = sys.driver_is_angular(0) ? std::numbers::pi / 180.0 : sys.scale() / 360.0;
  return travel / std::abs(sys.rates()[0]);
}

/// Time for one full turn of the first (revolute) driver.
inline std::optional<double> cycle_duration(const ConstraintSystem& sys) {
  if (sys.rates().empty() || !sys.driver_is_angular(0) || sys.rates()[0] == 0.0) return std::nullopt;
  return 2.0 * std::numbers::pi / std::abs(sys.rates()[0]);
}

/// Resumable fixed-step march: targets are measured from the starting
/// coordinates so long runs do not accumulate drift. Without a duration it
/// steps until the caller stops or the state leaves Ok.
class Stepper {
 public:
  Stepper(const ConstraintSystem& sys, SimState start, double dt, std::optional<double> duration)
      : sys_(&sys), start_(std::move(start)), dt_(dt), duration_(duration) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
    if (duration && !(*duration >= 0.0)) throw InvalidArgument("duration must be non-negative");
    if (duration) steps_ = static_cast<std::size_t>(std::ceil(*duration / dt - 1e-9));
    cur_ = start_;
  }

  bool done() const { return !cur_.ok() || (steps_ && k_ >= *steps_); }
  const SimState& state() const { return cur_; }
  const SimState& start() const { return start_; }
  std::size_t ok_steps() const { return ok_steps_; }

  const SimState& step() {
    if (done()) return cur_;
    ++k_;
    double elapsed = static_cast<double>(k_) * dt_;
    if (duration_) elapsed = std::min(elapsed, *duration_);
    std::vector<double> targets = start_.drive;
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] += sys_->rates()[i] * elapsed;
    cur_ = advance(*sys_, cur_, targets, start_.t + elapsed);
    if (cur_.ok()) ++ok_steps_;
    return cur_;
  }

 private:
  const ConstraintSystem* sys_;
  SimState start_;
  double dt_;
  std::optional<double> duration_;
  std::optional<std::size_t> steps_;
  std::size_t k_ = 0;
  std::size_t ok_steps_ = 0;
  SimState cur_;
};

/// Fixed-step march. `on_state` sees every stepped state and may return
/// false to stop at that step boundary. Halts on the first non-Ok state.
template <class Sink>
RunOutcome run(ConstraintSystem& sys, const SimState& start, const RunOptions& opt, std::vector<Trace>* traces,
               Sink&& on_state) {
  if (opt.rates) sys.set_rates(*opt.rates);
  Stepper st(sys, start, opt.dt, opt.duration);
  RunOutcome out;
  if (traces) record(sys, start, *traces);
  while (!st.done()) {
    const SimState& s = st.step();
    if (traces) record(sys, s, *traces);
    if (s.ok() && !on_state(s)) {
      out.interrupted = true;
      break;
    }
  }
  out.final = st.state();
  out.ok_steps = st.ok_steps();
  if (!out.final.ok() && start.ok()) on_state(out.final);
  if (traces) mark_closed_if_full_turn(sys, start.drive, out.final.drive, *traces);
  return out;
}

inline RunOutcome run(ConstraintSystem& sys, const SimState& start, const RunOptions& opt,
                      std::vector<Trace>* traces = nullptr) {
  return run(sys, start, opt, traces, [](const SimState&) { return true; });
}

/// Sub-step size for scrubbing: at most 5 degrees (or 5% of the scene for a
/// slider) and at most 5% of the requested travel.
inline double scrub_substep(const ConstraintSystem& sys, std::size_t driver, double travel) {
  const double cap = sys.driver_is_angular(driver) ? 5.0 * std::numbers::pi / 180.0 : 0.05 * sys.scale();
  return std::min(cap, 0.05 * std::abs(travel));
}

/// Continuation of one driver coordinate to `target`, other drivers held.
/// Time does not advance.
template <class Sink>
SimState scrub_input(const ConstraintSystem& sys, const SimState& state, double target, std::size_t driver,
                     std::vector<Trace>* traces, Sink&& on_state) {
  if (!state.ok()) return state;
  if (driver >= state.drive.size()) throw InvalidArgument("no such driver");
  const double from = state.drive[driver];
  const double travel = target - from;
  if (travel == 0.0) return state;
  const double h = scrub_substep(sys, driver, travel);
  const auto n = static_cast<std::size_t>(std::ceil(std::abs(travel) / h - 1e-9));
  SimState cur = state;
  for (std::size_t i = 1; i <= n; ++i) {
    std::vector<double> targets = cur.drive;
    targets[driver] = i == n ? target : from + travel * static_cast<double>(i) / static_cast<double>(n);
    cur = advance(sys, cur, targets, cur.t);
    if (traces) record(sys, cur, *traces);
    if (!on_state(cur) || !cur.ok()) break;
  }
  if (traces) mark_closed_if_full_turn(sys, state.drive, cur.drive, *traces);
  return cur;
}

inline SimState scrub_input(const ConstraintSystem& sys, const SimState& state, double target,
                            std::size_t driver = 0, std::vector<Trace>* traces = nullptr) {
  return scrub_input(sys, state, target, driver, traces, [](const SimState&) { return true; });
}

// ---------------------------------------------------------------------------
// Re-posing a mechanism

/// Places every link of `mech` at the poses in `q` and wraps angles into
/// (-pi, pi]; the result's reference pose is that configuration.
inline Mechanism with_reference(const ConstraintSystem& sys, const PoseVector& q) {
  Mechanism m = sys.mechanism();
  for (auto& l : m.links) {
    if (l.is_ground) continue;
    Pose p = sys.pose(q, l.id);
    p.theta = wrap_angle(p.theta);
    l.pose = p;
  }
  return m;
}

/// Restores closure after a geometric edit with every driver held at
/// `hold` (or its current value). Minimum-norm steps keep the motion small
/// for under-driven instances.
inline PoseVector reassemble(const Mechanism& mech, const std::vector<double>* hold = nullptr) {
  ConstraintSystem sys(mech);
  PoseVector q = sys.reference();
  const std::vector<double> targets = hold ? *hold : sys.coordinates(q);
  NewtonResult nr = newton(sys, q, targets);
  if (!nr.converged) throw AssemblyFailed("mechanism cannot close with the edited joint");
  return nr.q;
}

}  // namespace sketchlink
