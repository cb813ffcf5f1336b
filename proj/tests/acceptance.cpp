// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "sketchlink/fixtures.hpp"
#include "sketchlink/joint_edit.hpp"
#include "sketchlink/session.hpp"
#include "support.hpp"

using namespace sketchlink;
namespace fx = sketchlink::fixtures;
using support::deg;
using support::kPi;

namespace {

// Tolerances.
constexpr double kPoseTol = 1e-8;           // FB1 pins, SC1 slider
constexpr double kClosureTol = 1e-6;        // trace first vs last sample
constexpr double kFb1Seconds = 1.0;
constexpr double kParallelTol = 1e-9;       // PG1 coupler angle
constexpr double kResidualFactor = 1e-9;    // x scene diagonal
constexpr double kJacobianRelTol = 1e-5;
constexpr double kFdStep = 1e-6;
constexpr int kJacobianPoses = 100;
constexpr double kLockTol = 1e-6;
constexpr double kAnchorRelTol = 1e-9;      // x radius
constexpr int kPermutations = 20;
constexpr double kLengthTol = 1e-12;
constexpr double kRestoreTol = 1e-9;
constexpr double kSuiteSeconds = 30.0;

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CycleRun {
  std::vector<SimState> states;  // every Ok state including the start
  std::vector<Trace> traces;
  RunOutcome out;
};

CycleRun cycle(const Mechanism& m, std::optional<std::vector<double>> rates = std::nullopt) {
  ConstraintSystem sys = assemble(m);
  if (rates) sys.set_rates(*rates);
  CycleRun c;
  c.traces = make_traces(m);
  const SimState s0 = sys.initial_state();
  c.states.push_back(s0);
  c.out = run(sys, s0, {*cycle_duration(sys), default_dt(sys), std::nullopt}, &c.traces, [&](const SimState& s) {
    if (s.ok()) c.states.push_back(s);
    return true;
  });
  return c;
}

Point2 joint_point(const ConstraintSystem& sys, const PoseVector& q, const KinJoint& j, EntityId link) {
  return sys.pose(q, link).apply(j.link_a == link ? j.anchor_a : j.anchor_b);
}

/// Constraint residual recomputed from link poses, without the solver's
/// residual function.
double independent_residual(const ConstraintSystem& sys, const SimState& s) {
  const Mechanism& m = sys.mechanism();
  const double L = m.scale;
  double sq = 0;
  std::size_t k = 0;
  for (const auto& j : m.joints) {
    const Pose pa = sys.pose(s.q, j.link_a), pb = sys.pose(s.q, j.link_b);
    const Point2 d = pa.apply(j.anchor_a) - pb.apply(j.anchor_b);
    double coord = 0;
    if (j.kind == JointKind::Revolute) {
      sq += dot(d, d);
      coord = pb.theta - pa.theta;
    } else {
      const Point2 u = pb.apply_direction(j.axis_b);
      const double ang = L * std::remainder(pb.theta - pa.theta - j.angle_offset, 2 * kPi);
      const double off = cross(u, d);
      sq += ang * ang + off * off;
      coord = dot(u, d);
    }
    if (j.is_input()) {
      const double r = (coord - s.drive.at(k++)) * (j.kind == JointKind::Revolute ? L : 1.0);
      sq += r * r;
    }
  }
  return std::sqrt(sq);
}

Mechanism five_bar_two_drivers() {
  const auto f = fx::five_bar();
  Mechanism m = f.instance();
  m.find_joint(f.id("joint_e"))->driver = Driver{-0.5};
  return m;
}

/// Every simulatable instance among the fixtures, labelled.
std::vector<std::pair<std::string, Mechanism>> simulatable() {
  std::vector<std::pair<std::string, Mechanism>> out;
  for (auto& [name, make] : fx::catalog()) {
    if (name == "triangle" || name == "five_bar") continue;
    const auto f = make();
    for (const auto& m : f.mechanism().instances) out.push_back({name + "#" + std::to_string(m.instance), m});
  }
  out.push_back({"five_bar(2 drivers)", five_bar_two_drivers()});
  return out;
}

// ---------------------------------------------------------------------------

Verdict four_bar_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto f = fx::fb1();
  const ConstraintSystem sys = assemble(f.instance());
  const CycleRun c = cycle(f.instance());
  const double secs = seconds_since(t0);
  const KinJoint& ja = *f.instance().find_joint(f.id("joint_a"));
  const KinJoint& jb = *f.instance().find_joint(f.id("joint_b"));
  double worst = 0;
  std::size_t angles = 0;
  for (std::size_t i = 1; i < c.states.size(); ++i) {
    const SimState& s = c.states[i];
    const double phi = s.drive[0];
    worst = std::max(worst, distance(joint_point(sys, s.q, ja, f.id("crank")), 2.0 * Point2{std::cos(phi), std::sin(phi)}));
    worst = std::max(worst, distance(joint_point(sys, s.q, jb, f.id("rocker")),
                                     support::four_bar_pin({0, 0}, {8, 0}, 2, 6, 5, phi)));
    ++angles;
  }
  const auto& smp = c.traces.at(0).samples;
  const double closure = distance(smp.front().p, smp.back().p);
  const bool pass = angles == 360 && worst <= kPoseTol && closure <= kClosureTol && secs < kFb1Seconds;
  return {pass, std::to_string(angles) + " angles, max pin error " + fmt(worst) + ", closure " + fmt(closure) + ", " +
                    fmt(secs) + " s"};
}

Verdict slider_crank() {
  const auto f = fx::sc1();
  ConstraintSystem sys = assemble(f.instance());
  const CycleRun c = cycle(f.instance());
  const TrackedPoint& tp = f.instance().tracked.at(0);
  double worst = 0;
  std::size_t angles = 0;
  for (std::size_t i = 1; i < c.states.size(); ++i) {
    const SimState& s = c.states[i];
    const Point2 p = sys.world(s.q, tp);
    const double theta = kPi / 2 + s.drive[0];  // built at 90 degrees
    worst = std::max({worst, std::abs(p.x - support::slider_x(1, 3, theta)), std::abs(p.y)});
    ++angles;
  }
  const SimState at0 = scrub_input(sys, sys.initial_state(), -kPi / 2);
  const double x0 = sys.world(at0.q, tp).x;
  const bool pass = angles == 360 && worst <= kPoseTol && at0.ok() && std::abs(x0 - 4.0) <= kPoseTol;
  return {pass, std::to_string(angles) + " angles, max error " + fmt(worst) + ", x(0 deg) - 4 = " + fmt(x0 - 4.0)};
}

Verdict parallelogram() {
  const auto f = fx::pg1();
  const ConstraintSystem sys = assemble(f.instance());
  const CycleRun c = cycle(f.instance());
  const double theta0 = sys.pose(c.states.front().q, f.id("coupler")).theta;
  double worst = 0;
  for (const auto& s : c.states) worst = std::max(worst, std::abs(sys.pose(s.q, f.id("coupler")).theta - theta0));
  const bool pass = c.out.final.ok() && c.states.size() == 361 && worst <= kParallelTol;
  return {pass, std::to_string(c.states.size()) + " poses, status " + to_string(c.out.final.status) +
                    ", max coupler rotation " + fmt(worst)};
}

Verdict constraint_conservation() {
  double worst_ratio = 0;
  std::size_t steps = 0;
  std::string worst_name;
  for (auto& [name, m] : simulatable()) {
    const ConstraintSystem sys = assemble(m);
    const std::vector<SimState> states = cycle(m).states;
    for (const auto& s : states) {
      const double r = independent_residual(sys, s) / (kResidualFactor * m.scale);
      if (r > worst_ratio) worst_ratio = r, worst_name = name;
      ++steps;
    }
  }
  return {worst_ratio <= 1.0, std::to_string(steps) + " Ok states, worst residual / (1e-9 L) = " + fmt(worst_ratio) +
                                  (worst_name.empty() ? "" : " (" + worst_name + ")")};
}

Verdict jacobian() {
  std::mt19937_64 rng(20261016);
  double worst = 0;
  std::size_t fixtures = 0, poses = 0;
  for (auto& [name, m] : simulatable()) {
    const ConstraintSystem sys = assemble(m);
    const SimState s0 = sys.initial_state();
    // Reachable range of the first driver.
    double lo = -kPi, hi = kPi;
    for (double dir : {1.0, -1.0}) {
      const SimState end = scrub_input(sys, s0, dir * 2 * kPi);
      if (!end.ok()) (dir > 0 ? hi : lo) = end.drive[0] - dir * 1e-3;
    }
    std::uniform_real_distribution<double> pick(lo, hi);
    int got = 0;
    for (int attempt = 0; got < kJacobianPoses && attempt < 10 * kJacobianPoses; ++attempt) {
      const SimState s = scrub_input(sys, s0, pick(rng));
      if (!s.ok()) continue;
      const Eigen::MatrixXd J = sys.jacobian(s.q);
      for (Eigen::Index col = 0; col < s.q.size(); ++col) {
        PoseVector qp = s.q, qm = s.q;
        qp[col] += kFdStep;
        qm[col] -= kFdStep;
        const Eigen::VectorXd fd = (sys.residual(qp, s.drive) - sys.residual(qm, s.drive)) / (2 * kFdStep);
        for (Eigen::Index row = 0; row < fd.size(); ++row)
          worst = std::max(worst, std::abs(J(row, col) - fd[row]) / std::max(1.0, std::abs(fd[row])));
      }
      ++got;
    }
    if (got < kJacobianPoses) return {false, name + ": only " + std::to_string(got) + " feasible poses"};
    ++fixtures;
    poses += static_cast<std::size_t>(got);
  }
  return {worst <= kJacobianRelTol, std::to_string(poses) + " poses over " + std::to_string(fixtures) +
                                         " instances, max relative error " + fmt(worst)};
}

Verdict locking() {
  const auto f = fx::non_grashof();
  ConstraintSystem sys = assemble(f.instance());
  const RunOutcome out = run(sys, sys.initial_state(), {*cycle_duration(sys), default_dt(sys), std::nullopt});
  const double limit = support::extension_limit(3, 4, 3, 5);  // absolute input angle
  const double reached = fx::kNonGrashofBuildAngle + out.final.drive[0];
  const double err = std::abs(reached - limit);
  const bool pass = out.final.status == SimStatus::Locked && err <= kLockTol;
  return {pass, std::string("status ") + to_string(out.final.status) + " at " + fmt(reached * 180 / kPi) +
                    " deg, oracle " + fmt(limit * 180 / kPi) + " deg, error " + fmt(err) + " rad"};
}

Verdict mobility_counts() {
  const int four = mobility(fx::fb1().instance());
  const int five = mobility(fx::five_bar().instance());
  const int tri = mobility(fx::triangle().instance());
  return {four == 1 && five == 2 && tri == 0,
          "four-bar " + std::to_string(four) + ", five-bar " + std::to_string(five) + ", triangle " + std::to_string(tri)};
}

Verdict recognition_corpus(std::string& info) {
  const auto corpus = support::gesture_corpus();
  std::size_t clean = 0, clean_ok = 0, noisy = 0, noisy_ok = 0, circles = 0;
  std::map<support::Shape, std::pair<int, int>> open_shapes;  // circles, total
  double anchor = 0;
  for (const auto& c : corpus) {
    const GestureClass g = classify_gesture(support::gesture_stroke(c.points));
    if (c.shape == support::Shape::Circle || c.shape == support::Shape::Line) {
      const bool ok = g.kind == (c.shape == support::Shape::Circle ? GestureKind::Circle : GestureKind::Line);
      (c.noise == 0.0 ? clean : noisy) += 1;
      (c.noise == 0.0 ? clean_ok : noisy_ok) += ok;
      if (c.shape == support::Shape::Circle && c.noise == 0.0) {
        anchor = std::max(anchor, distance(g.center, c.center) / c.radius);
        ++circles;
      }
    }
    if (c.shape == support::Shape::Scribble || c.shape == support::Shape::Zigzag) {
      open_shapes[c.shape].first += g.kind == GestureKind::Circle;
      ++open_shapes[c.shape].second;
    }
  }
  // Grouping must not depend on stroke order.
  std::mt19937_64 rng(7);
  std::size_t perms = 0, perm_ok = 0;
  for (auto& [name, make] : fx::catalog()) {
    std::vector<Stroke> strokes = make().doc.state().strokes;
    const double eps = default_epsilon(make().doc.state().scene_bounds());
    const auto ref = group_links(strokes, eps);
    for (int k = 0; k < kPermutations; ++k) {
      std::shuffle(strokes.begin(), strokes.end(), rng);
      perm_ok += group_links(strokes, eps) == ref;
      ++perms;
    }
  }
  info = "classified as circles:";
  for (const auto& [shape, n] : open_shapes)
    info += std::string(" ") + support::to_string(shape) + " " + std::to_string(n.first) + "/" + std::to_string(n.second);
  const bool pass = clean_ok == clean && anchor <= kAnchorRelTol && perm_ok == perms && corpus.size() == 200;
  return {pass, std::to_string(corpus.size()) + " strokes; clean circle/line " + std::to_string(clean_ok) + "/" +
                    std::to_string(clean) + ", noisy " + std::to_string(noisy_ok) + "/" + std::to_string(noisy) +
                    "; max anchor error " + fmt(anchor) + " r over " + std::to_string(circles) +
                    " clean circles; grouping stable in " + std::to_string(perm_ok) + "/" + std::to_string(perms) +
                    " permutations"};
}

Verdict joint_manipulation() {
  const auto f = fx::fb1();
  const Mechanism& m = f.instance();
  const EntityId rocker = f.id("rocker"), jb = f.id("joint_b");
  const KinJoint& j = *m.find_joint(jb);
  const Point2 local_b = j.link_a == rocker ? j.anchor_a : j.anchor_b;
  const Point2 b = m.find_link(rocker)->pose.apply(local_b);
  const Point2 c = {8, 0};
  const Mechanism longer = move_joint(m, nullptr, jb, b + (b - c) / distance(b, c), rocker);
  const double grow = std::abs(*link_length(longer, rocker) - *link_length(m, rocker) - 1.0);

  const Mechanism moved = move_joint(m, nullptr, jb, b + Point2{0.3, 0.4}, rocker);
  const Mechanism back = move_joint(moved, nullptr, jb, moved.find_link(rocker)->pose.apply(local_b), rocker);
  double restore = 0;
  for (const auto& l : m.links) {
    const auto d0 = inter_anchor_distances(m, l.id), d1 = inter_anchor_distances(back, l.id);
    for (std::size_t i = 0; i < d0.size(); ++i) restore = std::max(restore, std::abs(d0[i] - d1[i]));
  }
  return {grow <= kLengthTol && restore <= kRestoreTol,
          "length change error " + fmt(grow) + ", round-trip error " + fmt(restore)};
}

Verdict persistence_and_replay() {
  std::size_t fixpoints = 0, total = 0;
  for (auto& [name, make] : fx::catalog()) {
    const std::string once = save(make().doc);
    fixpoints += save(load_state(once)) == once;
    ++total;
  }

  SessionOptions opt;
  opt.max_event_rate = 0;
  SessionManager mgr(opt);
  std::vector<json> events = mgr.handle({{"seq", 1}, {"command", "create_session"}});
  const std::string sid = events.at(0).at("session");
  const auto script = support::fb1_script(sid);
  for (const auto& cmd : script) {
    for (auto& e : mgr.handle(cmd)) events.push_back(std::move(e));
    for (auto& e : mgr.pump(7)) events.push_back(std::move(e));
  }
  while (mgr.running())
    for (auto& e : mgr.pump(64)) events.push_back(std::move(e));
  const std::string truth = mgr.find(sid)->state_json().dump();
  auto replay_from = [&](std::size_t first) {
    ClientReplica replica;
    bool applied = true;
    for (std::size_t i = first; i < events.size(); ++i) applied = replica.apply(events[i]) && applied;
    return applied && replica.state().dump() == truth;
  };
  std::size_t late = 0;
  for (std::size_t i = 0; i < events.size(); ++i)
    if (events[i].value("type", "") == "snapshot") late = i;
  const bool replay = late > 0 && replay_from(0) && replay_from(late);
  return {fixpoints == total && replay && script.size() == 50,
          std::to_string(fixpoints) + "/" + std::to_string(total) + " fixtures byte-identical; " +
              std::to_string(script.size()) + "-command replay from zero and from the late snapshot " + (replay ? "identical" : "differs") + " (revision " +
              std::to_string(mgr.find(sid)->revision()) + ", " + std::to_string(events.size()) + " events)"};
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string info;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"Four-bar oracle equivalence", four_bar_oracle},
      {"Slider-crank analytic check", slider_crank},
      {"Parallelogram invariant", parallelogram},
      {"Constraint conservation", constraint_conservation},
      {"Jacobian vs finite differences", jacobian},
      {"Locking detection", locking},
      {"Mobility", mobility_counts},
      {"Recognition corpus", [&] { return recognition_corpus(info); }},
      {"Joint manipulation", joint_manipulation},
      {"Persistence + protocol replay", persistence_and_replay},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail << " [" << fmt(seconds_since(t))
              << " s]\n";
  }
  const double total = seconds_since(t0);
  const bool fast = total < kSuiteSeconds;
  failed += !fast;
  std::cout << (fast ? "PASS" : "FAIL") << "  Suite runtime: " << fmt(total) << " s (limit " << fmt(kSuiteSeconds)
            << " s)\n";
  std::cout << "INFO  " << info << "\n";
  std::cout << (failed ? "FAILED: " + std::to_string(failed) + " criteria" : std::string("ALL CRITERIA PASS")) << "\n";
  return failed ? 1 : 0;
}
