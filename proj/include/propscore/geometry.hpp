// Copyright 2026 The proposal-scorer authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <vector>

#include "propscore/core.hpp"

namespace propscore
{

struct OrientedBox
{
  Pose2D center{};
  double length = 0.0;
  double width = 0.0;
};

/// Corners in fixed order: front-left, front-right, rear-right, rear-left.
inline std::array<Vec2, 4> box_corners(const OrientedBox & box)
{
  const double c = std::cos(box.center.heading);
  const double s = std::sin(box.center.heading);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  // Axis-aligned template (FL, FR, RR, RL), rotated then translated.
  const std::array<Vec2, 4> local{Vec2{hl, hw}, Vec2{hl, -hw}, Vec2{-hl, -hw}, Vec2{-hl, hw}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {
      c * local[i].x - s * local[i].y + box.center.x,
      s * local[i].x + c * local[i].y + box.center.y};
  }
  return out;
}

namespace detail
{
// Projects corners onto an axis and checks interval overlap (closed intervals).
inline bool axis_separates(
  const Vec2 & axis, const std::array<Vec2, 4> & a, const std::array<Vec2, 4> & b)
{
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = amax;
  for (const auto & p : a) {
    const double d = axis.dot(p);
    amin = std::min(amin, d);
    amax = std::max(amax, d);
  }
  for (const auto & p : b) {
    const double d = axis.dot(p);
    bmin = std::min(bmin, d);
    bmax = std::max(bmax, d);
  }
  return amax < bmin || bmax < amin;
}
}  // namespace detail

/// Separating-axis test over the 4 edge normals. Shared boundary counts as
/// intersecting.
inline bool boxes_intersect(const OrientedBox & a, const OrientedBox & b)
{
  const auto ca = box_corners(a);
  const auto cb = box_corners(b);
  const std::array<Vec2, 4> axes{
    Vec2{std::cos(a.center.heading), std::sin(a.center.heading)},
    Vec2{-std::sin(a.center.heading), std::cos(a.center.heading)},
    Vec2{std::cos(b.center.heading), std::sin(b.center.heading)},
    Vec2{-std::sin(b.center.heading), std::cos(b.center.heading)}};
  for (const auto & axis : axes) {
    if (detail::axis_separates(axis, ca, cb)) return false;
  }
  return true;
}

inline double point_segment_distance(const Vec2 & p, const Vec2 & a, const Vec2 & b)
{
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double u = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return (p - (a + ab * u)).norm();
}

/// Even-odd containment; points within 1e-9 of the boundary count as inside.
inline bool point_in_polygon(const Vec2 & p, const std::vector<Vec2> & poly)
{
  if (poly.size() < 3) {
    throw ValidationError("point_in_polygon: polygon needs at least 3 vertices");
  }
  constexpr double boundary_eps = 1e-9;
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 & a = poly[j];
    const Vec2 & b = poly[i];
    if (point_segment_distance(p, a, b) <= boundary_eps) return true;
    if ((b.y > p.y) != (a.y > p.y)) {
      const double t = (p.y - b.y) / (a.y - b.y);
      if (p.x < b.x + t * (a.x - b.x)) inside = !inside;
    }
  }
  return inside;
}

class Polyline
{
public:
  explicit Polyline(std::vector<Vec2> points) : points_(std::move(points))
  {
    if (points_.size() < 2) {
      throw ValidationError("Polyline: needs at least 2 points");
    }
    arclength_.resize(points_.size());
    arclength_[0] = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) {
      arclength_[i] = arclength_[i - 1] + (points_[i] - points_[i - 1]).norm();
    }
  }

  const std::vector<Vec2> & points() const { return points_; }
  const std::vector<double> & cumulative_arclength() const { return arclength_; }
  double total_length() const { return arclength_.back(); }

private:
  std::vector<Vec2> points_;
  std::vector<double> arclength_;
};

struct PolylineProjection
{
  double arclength = 0.0;       // clamped to [0, total length]
  double signed_lateral = 0.0;  // positive left of travel direction
  Vec2 foot{};                  // closest point on the polyline
  bool clamped = false;         // foot is an endpoint of the whole polyline
};

/// Closest-point projection; ties broken by smallest arclength.
inline PolylineProjection project_to_polyline(const Vec2 & p, const Polyline & line)
{
  const auto & pts = line.points();
  const auto & arc = line.cumulative_arclength();
  PolylineProjection best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const Vec2 a = pts[i];
    const Vec2 b = pts[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    double u = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const Vec2 foot = a + ab * u;
    const double dist = (p - foot).norm();
    const double s = arc[i] + u * std::sqrt(len2);
    if (dist < best_dist - 1e-15 || (std::abs(dist - best_dist) <= 1e-15 && s < best.arclength)) {
      best_dist = dist;
      best.arclength = s;
      best.foot = foot;
      const double side = ab.cross(p - a);
      best.signed_lateral = side >= 0.0 ? dist : -dist;
    }
  }
  best.arclength = std::clamp(best.arclength, 0.0, line.total_length());
  best.clamped = best.arclength <= 0.0 || best.arclength >= line.total_length();
  return best;
}

}  // namespace propscore
