#pragma once

#include <charconv>
#include <sstream>
#include <string>
#include <vector>

#include "sketchlink/document.hpp"
#include "sketchlink/kinematics.hpp"

namespace sketchlink {

/// Shortest decimal that parses back to the same double.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::to_string(v);
}

inline constexpr const char* kTraceCsvHeader = "t,x,y,link_id,px,py";

inline std::string traces_to_csv(const std::vector<Trace>& traces) {
  std::string out = std::string(kTraceCsvHeader) + "\n";
  for (const auto& tr : traces) {
    const std::string tail = "," + std::to_string(tr.point.link) + "," + format_number(tr.point.local.x) + "," +
                             format_number(tr.point.local.y) + "\n";
    for (const auto& s : tr.samples)
      out += format_number(s.t) + "," + format_number(s.p.x) + "," + format_number(s.p.y) + tail;
  }
  return out;
}

/// Traces as SVG polylines over the build-pose skeleton: one segment per
/// pair of joint anchors on each link, joints as circles.
inline std::string traces_to_svg(const std::vector<Mechanism>& mechs, const std::vector<Trace>& traces) {
  Box box;
  for (const auto& m : mechs)
    for (const auto& j : m.joints) box.add(m.find_link(j.link_a)->pose.apply(j.anchor_a));
  for (const auto& tr : traces)
    for (const auto& s : tr.samples) box.add(s.p);
  if (box.empty()) box.add(Point2{0, 0});
  const double pad = 0.05 * std::max(box.diagonal(), 1.0);
  const double w = box.max.x - box.min.x + 2 * pad;
  const double h = box.max.y - box.min.y + 2 * pad;
  const double stroke_w = 0.004 * std::max(w, h);
  // Sketch y points up; SVG y points down.
  auto px = [&](Point2 p) { return format_number(p.x) + "," + format_number(-p.y); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << format_number(box.min.x - pad) << " "
      << format_number(-(box.max.y + pad)) << " " << format_number(w) << " " << format_number(h) << "\">\n";
  svg << "<g id=\"skeleton\" stroke=\"#888888\" stroke-width=\"" << format_number(stroke_w) << "\" fill=\"none\">\n";
  for (const auto& m : mechs) {
    for (const auto& l : m.links) {
      std::vector<Point2> anchors;
      for (const auto& j : m.joints) {
        if (j.link_a == l.id) anchors.push_back(l.pose.apply(j.anchor_a));
        if (j.link_b == l.id) anchors.push_back(l.pose.apply(j.anchor_b));
      }
      for (std::size_t i = 0; i < anchors.size(); ++i)
        for (std::size_t k = i + 1; k < anchors.size(); ++k)
          svg << "<line data-link=\"" << l.id << "\" x1=\"" << format_number(anchors[i].x) << "\" y1=\""
              << format_number(-anchors[i].y) << "\" x2=\"" << format_number(anchors[k].x) << "\" y2=\""
              << format_number(-anchors[k].y) << "\"/>\n";
    }
    for (const auto& j : m.joints) {
      const Point2 p = m.find_link(j.link_a)->pose.apply(j.anchor_a);
      svg << "<circle data-joint=\"" << j.id << "\" cx=\"" << format_number(p.x) << "\" cy=\"" << format_number(-p.y)
          << "\" r=\"" << format_number(3 * stroke_w) << "\" fill=\"" << (j.is_input() ? "#d62728" : "#1f77b4")
          << "\"/>\n";
    }
  }
  svg << "</g>\n<g id=\"traces\" stroke=\"#2ca02c\" stroke-width=\"" << format_number(stroke_w) << "\" fill=\"none\">\n";
  for (const auto& tr : traces) {
    svg << "<polyline data-link=\"" << tr.point.link << "\" points=\"";
    for (std::size_t i = 0; i < tr.samples.size(); ++i) svg << (i ? " " : "") << px(tr.samples[i].p);
    svg << "\"/>\n";
  }
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace sketchlink
