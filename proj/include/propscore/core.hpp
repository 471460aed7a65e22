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

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace propscore
{

/// Thrown when an input file or structure violates the documented schema.
class SchemaError : public std::runtime_error
{
public:
  explicit SchemaError(const std::string & what) : std::runtime_error(what) {}
};

/// Thrown when a structurally well-formed input violates a model invariant.
class ValidationError : public std::runtime_error
{
public:
  explicit ValidationError(const std::string & what) : std::runtime_error(what) {}
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a)
{
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -pi) a += two_pi;
  if (a > pi) a -= two_pi;
  return a;
}

/// Signed shortest-arc difference a - b, in (-pi, pi].
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

/// Shortest-arc interpolation between headings at parameter u in [0, 1].
inline double lerp_angle(double a, double b, double u)
{
  return wrap_angle(a + angle_diff(b, a) * u);
}

struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2 & o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2 & o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2 & o) const { return x * o.x + y * o.y; }
  double cross(const Vec2 & o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

struct Pose2D
{
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, wrapped to (-pi, pi]

  Vec2 position() const { return {x, y}; }
};

/// Rigid 2D transform (rotation then translation), used by equivariance checks.
struct RigidTransform2D
{
  double angle = 0.0;
  Vec2 shift{};

  Vec2 apply(const Vec2 & p) const
  {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y};
  }

  Pose2D apply(const Pose2D & p) const
  {
    const Vec2 q = apply(Vec2{p.x, p.y});
    return {q.x, q.y, wrap_angle(p.heading + angle)};
  }
};

struct VehicleDims
{
  double length = 0.0;     // meters
  double width = 0.0;      // meters
  double wheelbase = 0.0;  // meters, <= length

  void validate(const std::string & who) const
  {
    if (!(length > 0.0) || !(width > 0.0) || !(wheelbase > 0.0)) {
      throw ValidationError(who + ": vehicle dimensions must be positive");
    }
    if (wheelbase > length) {
      throw ValidationError(who + ": wheelbase exceeds length");
    }
  }
};

inline void check_finite_pose(const Pose2D & p, const std::string & who)
{
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.heading)) {
    throw ValidationError(who + ": non-finite pose");
  }
}

}  // namespace propscore
