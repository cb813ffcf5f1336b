#pragma once

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sketchlink/export.hpp"
#include "sketchlink/persistence.hpp"
#include "sketchlink/transport.hpp"
#include "sketchlink/workbench.hpp"

namespace sketchlink {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitHalted = 2;

struct RunSpec {
  std::string input;
  std::map<EntityId, double> drivers;  // joint id -> rate
  std::optional<double> duration;
  std::optional<double> cycles;
  std::optional<double> dt;
  std::string csv;
  std::string svg;
};

namespace cli_detail {

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << data) || !out.flush()) throw IoError("cannot write " + path);
}

inline std::pair<EntityId, double> parse_driver(const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos) throw InvalidArgument("--driver expects JOINT=RATE, got '" + spec + "'");
  try {
    std::size_t a = 0, b = 0;
    const std::string js = spec.substr(0, eq), rs = spec.substr(eq + 1);
    const unsigned long long id = std::stoull(js, &a);
    const double rate = std::stod(rs, &b);
    if (a != js.size() || b != rs.size() || !std::isfinite(rate)) throw std::invalid_argument("");
    return {static_cast<EntityId>(id), rate};
  } catch (const std::exception&) {
    throw InvalidArgument("--driver expects JOINT=RATE, got '" + spec + "'");
  }
}

inline std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

inline std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(3) << v;
  return s.str();
}

inline bool has_ink(const DocumentState& d) {
  return std::any_of(d.strokes.begin(), d.strokes.end(), [](const Stroke& s) { return s.mode == StrokeMode::Ink; });
}

}  // namespace cli_detail

/// Loads, builds when needed, and simulates every instance. Returns the
/// exit code; artifacts are written even when a run halts early.
inline int cmd_simulate(const RunSpec& spec, std::ostream& out) {
  if (spec.duration && spec.cycles) throw InvalidArgument("give --duration or --cycles, not both");
  if (spec.dt && !(*spec.dt > 0.0 && std::isfinite(*spec.dt))) throw InvalidArgument("--dt must be positive");
  if (spec.duration && !(*spec.duration >= 0.0 && std::isfinite(*spec.duration)))
    throw InvalidArgument("--duration must be non-negative");
  if (spec.cycles && !(*spec.cycles >= 0.0 && std::isfinite(*spec.cycles)))
    throw InvalidArgument("--cycles must be non-negative");

  SketchDocument doc = load(cli_detail::read_text(spec.input));
  if (!doc.state().mechanism) recognize(doc);
  if (!doc.state().mechanism->built) build(doc);
  std::vector<Mechanism> mechs = doc.state().mechanism->instances;
  if (mechs.empty()) throw InvalidInput("no mechanism to simulate");

  std::map<EntityId, double> pending = spec.drivers;
  for (auto& m : mechs)
    for (auto& j : m.joints)
      if (auto it = pending.find(j.id); it != pending.end()) {
        j.driver = Driver{it->second};
        pending.erase(it);
      }
  if (!pending.empty()) throw UnknownEntity("no joint " + std::to_string(pending.begin()->first));

  // Validate every instance before running any of them.
  std::vector<ConstraintSystem> systems;
  for (const auto& m : mechs) systems.push_back(assemble(m));

  std::vector<Trace> all;
  bool halted = false;
  for (std::size_t i = 0; i < mechs.size(); ++i) {
    const Mechanism& m = mechs[i];
    ConstraintSystem& sys = systems[i];
    const double dt = spec.dt.value_or(default_dt(sys));
    double duration = 0.0;
    if (spec.duration) {
      duration = *spec.duration;
    } else {
      const auto cycle = cycle_duration(sys);
      if (!cycle) throw InvalidInput("instance " + std::to_string(m.instance) + " has no revolute driver; give --duration");
      duration = spec.cycles.value_or(1.0) * *cycle;
    }
    auto traces = make_traces(m);
    const RunOutcome r = run(sys, sys.initial_state(), {duration, dt, std::nullopt}, &traces);

    out << "instance " << m.instance << ": mobility " << mobility(m);
    if (auto g = classify_four_bar(m)) out << ", " << g->type << (g->grashof ? " (Grashof)" : " (non-Grashof)");
    out << "\n";
    out << "  steps " << r.ok_steps << ", final residual " << cli_detail::sci(r.final.residual_norm) << ", status "
        << to_string(r.final.status) << "\n";
    if (!r.final.ok()) {
      halted = true;
      for (std::size_t k = 0; k < sys.driver_joints().size(); ++k) {
        out << "  halted: joint " << sys.driver_joints()[k] << " reached coordinate " << cli_detail::num(r.final.drive[k]);
        if (k < r.final.blocked_at.size())
          out << ", limit " << cli_detail::num(r.final.blocked_at[k]) << (sys.driver_is_angular(k) ? " rad" : "");
        out << " at t=" << cli_detail::num(r.final.t) << "\n";
      }
    }
    for (const auto& tr : traces) out << "  trace on link " << tr.point.link << ": " << tr.samples.size() << " samples"
                                      << (tr.closed ? ", closed" : "") << "\n";
    all.insert(all.end(), traces.begin(), traces.end());
  }
  if (!spec.csv.empty()) cli_detail::write_text(spec.csv, traces_to_csv(all));
  if (!spec.svg.empty()) cli_detail::write_text(spec.svg, traces_to_svg(mechs, all));
  return halted ? kExitHalted : kExitOk;
}

/// Prints link and joint hypotheses, instances and mobility.
inline int cmd_recognize(const std::string& input, std::optional<double> epsilon, std::ostream& out) {
  SketchDocument doc = load(cli_detail::read_text(input));
  if (!cli_detail::has_ink(doc.state())) {
    out << "no ink strokes\n";
    if (doc.state().strokes.empty()) return kExitOk;
  }
  const std::vector<Diagnostic> diags = recognize(doc, epsilon);
  const DocumentState& st = doc.state();
  const BuildPlan& plan = st.mechanism->plan;
  out << "links: " << plan.links.size() << "\n";
  for (const auto& l : plan.links) {
    out << "  link " << l.id << " color " << l.color << (plan.ground.contains(l.id) ? " ground" : "") << " strokes";
    for (EntityId s : l.strokes) out << " " << s;
    out << "\n";
  }
  out << "joints: " << plan.joints.size() << "\n";
  for (const auto& j : plan.joints) {
    out << "  joint " << j.id << " " << to_string(j.kind) << " links " << j.link_a << "-" << j.link_b << " anchor ("
        << cli_detail::num(j.anchor.x) << ", " << cli_detail::num(j.anchor.y) << ")";
    if (auto it = plan.drivers.find(j.id); it != plan.drivers.end()) out << " input rate " << cli_detail::num(it->second);
    out << "\n";
  }
  const BuildResult br = build_mechanisms(plan, st.scene_diagonal());
  out << "instances: " << br.mechanisms.size() << "\n";
  for (const auto& m : br.mechanisms)
    out << "  instance " << m.instance << ": " << m.links.size() << " links, " << m.joints.size() << " joints, mobility "
        << mobility(m) << "\n";
  for (const auto& d : diags) out << "warning: " << d.code << " (stroke " << d.entity << "): " << d.message << "\n";
  return kExitOk;
}

namespace cli_detail {

inline std::atomic<bool>& stop_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

inline void on_stop_signal(int) { stop_flag().store(true); }

}  // namespace cli_detail

inline int cmd_serve(const std::string& config_path, const std::string& listen, std::ostream& log) {
  ws::ServerConfig cfg;
  if (!config_path.empty()) {
    json j;
    try {
      j = json::parse(cli_detail::read_text(config_path));
    } catch (const json::parse_error& e) {
      throw FormatError(std::string("malformed config: ") + e.what(), "byte " + std::to_string(e.byte));
    }
    cfg = ws::server_config_from_json(j);
  }
  if (!listen.empty()) ws::apply_listen(cfg, listen);
  ws::Server server(cfg, log);
  server.listen();
  cli_detail::stop_flag().store(false);
  struct sigaction sa {};
  sa.sa_handler = cli_detail::on_stop_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  return server.serve(cli_detail::stop_flag());
}

/// Entry point of the `sketchlink` tool.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sketch-based planar mechanism workbench", "sketchlink"};
  app.require_subcommand(1);

  RunSpec spec;
  std::vector<std::string> drivers;
  double dt = 0, duration = 0, cycles = 0;
  auto* sim = app.add_subcommand("simulate", "Build and simulate a .mech.json sketch");
  sim->add_option("input", spec.input, "Sketch file")->required();
  auto* o_dt = sim->add_option("--dt", dt, "Time step (default: one degree of input travel)");
  auto* o_cycles = sim->add_option("--cycles", cycles, "Input turns to simulate (default 1)");
  auto* o_duration = sim->add_option("--duration", duration, "Simulated time")->excludes(o_cycles);
  o_cycles->excludes(o_duration);
  sim->add_option("--driver", drivers, "Driver rate override, JOINT=RATE (repeatable)");
  sim->add_option("--csv", spec.csv, "Write traces as CSV");
  sim->add_option("--svg", spec.svg, "Write traces as SVG");

  std::string rec_input;
  double epsilon = 0;
  auto* rec = app.add_subcommand("recognize", "Print link and joint hypotheses for a sketch");
  rec->add_option("input", rec_input, "Sketch file")->required();
  auto* o_eps = rec->add_option("--epsilon", epsilon, "Grouping tolerance (default: 2% of the scene diagonal)");

  std::string config, listen;
  auto* serve = app.add_subcommand("serve", "Run the session service");
  serve->add_option("--config", config, "JSON config: {\"listen\": {\"host\", \"port\"}}");
  serve->add_option("--listen", listen, "HOST:PORT (overrides the config)");

  std::vector<std::string> args(argv + 1, argv + argc);
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }

  try {
    if (*sim) {
      if (*o_dt) spec.dt = dt;
      if (*o_duration) spec.duration = duration;
      if (*o_cycles) spec.cycles = cycles;
      for (const auto& d : drivers) {
        auto [id, rate] = cli_detail::parse_driver(d);
        spec.drivers[id] = rate;
      }
      return cmd_simulate(spec, out);
    }
    if (*rec) return cmd_recognize(rec_input, *o_eps ? std::optional<double>(epsilon) : std::nullopt, out);
    return cmd_serve(config, listen, err);
  } catch (const Error& e) {
    err << "error: " << e.name() << ": " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

}  // namespace sketchlink
