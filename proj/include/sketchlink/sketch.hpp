#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sketchlink/errors.hpp"
#include "sketchlink/geometry.hpp"

namespace sketchlink {

/// Document-wide identifier shared by strokes, underlays and decorations.
/// Links take the id of their lowest member stroke and joints the id of the
/// gesture stroke that defined them, so every entity id is a stroke-space id.
using EntityId = std::uint64_t;

enum class StrokeMode { Ink, Gesture };

inline const char* to_string(StrokeMode m) { return m == StrokeMode::Ink ? "ink" : "gesture"; }

struct TimedPoint {
  Point2 p;
  double t_ms = 0.0;
};

struct Stroke {
  EntityId id = 0;
  std::vector<Point2> points;
  std::vector<double> timestamps;  // milliseconds, one per point
  StrokeMode mode = StrokeMode::Ink;

  double length() const { return path_length(points); }
  friend bool operator==(const Stroke&, const Stroke&) = default;
};

/// Validates raw pointer samples and produces a stroke (id left for the caller).
inline Stroke make_stroke(std::span<const TimedPoint> samples, StrokeMode mode) {
  if (samples.size() < 2)
    throw RejectedStroke("stroke needs at least 2 points, got " + std::to_string(samples.size()));
  Stroke s;
  s.mode = mode;
  s.points.reserve(samples.size());
  s.timestamps.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& tp = samples[i];
    if (!tp.p.finite() || !std::isfinite(tp.t_ms)) throw RejectedStroke("non-finite sample");
    if (i > 0 && tp.t_ms < samples[i - 1].t_ms) throw RejectedStroke("timestamps decrease");
    s.points.push_back(tp.p);
    s.timestamps.push_back(tp.t_ms);
  }
  if (!(s.length() > 0.0)) throw RejectedStroke("stroke has zero path length");
  return s;
}

/// Reference image drawn beneath all strokes. Never processed, only displayed.
struct ImageUnderlay {
  EntityId id = 0;
  std::string image;  // file path or opaque blob id
  Point2 position;
  double scale = 1.0;
  double rotation = 0.0;

  friend bool operator==(const ImageUnderlay&, const ImageUnderlay&) = default;
};

/// Mini-sketch riding on a link. Strokes are stored in the host link's local
/// frame and are never seen by recognition.
struct Decoration {
  EntityId id = 0;
  EntityId link = 0;
  std::vector<Stroke> strokes;

  friend bool operator==(const Decoration&, const Decoration&) = default;
};

/// Resamples a polyline to `n` points equally spaced by arc length. Endpoints
/// are preserved exactly.
inline std::vector<Point2> resample(std::span<const Point2> pts, std::size_t n) {
  if (n < 2) throw InvalidArgument("resample needs n >= 2");
  if (pts.empty()) throw InvalidArgument("resample of an empty polyline");
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + distance(pts[i - 1], pts[i]);
  const double total = cum.back();

  std::vector<Point2> out;
  out.reserve(n);
  out.push_back(pts.front());
  std::size_t seg = 1;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg + 1 < pts.size() && cum[seg] < target) ++seg;
    const double seg_len = cum[seg] - cum[seg - 1];
    const double u = seg_len > 0.0 ? (target - cum[seg - 1]) / seg_len : 0.0;
    out.push_back(pts[seg - 1] + u * (pts[seg] - pts[seg - 1]));
  }
  out.push_back(pts.back());
  return out;
}

inline std::vector<Point2> resample_stroke(const Stroke& s, std::size_t n) { return resample(s.points, n); }

}  // namespace sketchlink
