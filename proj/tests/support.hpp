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

// Test-only oracles and fixture builders, independent of the implementation
// paths they check.

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "propscore/geometry.hpp"
#include "propscore/kernel.hpp"
#include "propscore/metrics.hpp"
#include "propscore/simulator.hpp"
#include "propscore/synthetic.hpp"

namespace testsupport
{

using propscore::Vec2;

// --- geometry oracles -------------------------------------------------------

/// Winding-number containment, independent of the even-odd implementation.
inline bool winding_number_inside(const Vec2 & p, const std::vector<Vec2> & poly)
{
  double total = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i] - p;
    const Vec2 b = poly[(i + 1) % poly.size()] - p;
    total += std::atan2(a.cross(b), a.dot(b));
  }
  return std::abs(total) > 3.141592653589793;  // ~2*pi inside, ~0 outside
}

/// Distance from a point to a polygon boundary.
inline double polygon_boundary_distance(const Vec2 & p, const std::vector<Vec2> & poly)
{
  double best = 1e300;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    best = std::min(
      best, propscore::point_segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
  }
  return best;
}

/// Dense point-sampling overlap oracle: samples a grid over box a and tests
/// containment in box b (and vice versa). A band around the boundary is
/// inconclusive.
inline int sampling_overlap_oracle(
  const propscore::OrientedBox & a, const propscore::OrientedBox & b, int grid = 120)
{
  // Returns 1 = definitely intersecting, 0 = definitely disjoint,
  // -1 = inconclusive (within the boundary band).
  const auto contains = [](const propscore::OrientedBox & box, const Vec2 & p, double shrink) {
    const double c = std::cos(box.center.heading);
    const double s = std::sin(box.center.heading);
    const Vec2 d{p.x - box.center.x, p.y - box.center.y};
    const double lx = c * d.x + s * d.y;
    const double ly = -s * d.x + c * d.y;
    return std::abs(lx) <= 0.5 * box.length + shrink && std::abs(ly) <= 0.5 * box.width + shrink;
  };
  const auto sample_hits = [&](const propscore::OrientedBox & src,
                               const propscore::OrientedBox & dst, double shrink) {
    const double c = std::cos(src.center.heading);
    const double s = std::sin(src.center.heading);
    for (int i = 0; i <= grid; ++i) {
      for (int j = 0; j <= grid; ++j) {
        const double lx = (-0.5 + static_cast<double>(i) / grid) * src.length;
        const double ly = (-0.5 + static_cast<double>(j) / grid) * src.width;
        const Vec2 p{src.center.x + c * lx - s * ly, src.center.y + s * lx + c * ly};
        if (contains(dst, p, shrink)) return true;
      }
    }
    return false;
  };
  const double band = 1e-6;
  const bool hit_inner = sample_hits(a, b, -band) || sample_hits(b, a, -band);
  if (hit_inner) return 1;
  const bool hit_outer = sample_hits(a, b, band) || sample_hits(b, a, band);
  if (!hit_outer) {
    // Sampling can miss thin overlaps; check with a coarse separation bound.
    const double cell = std::max({a.length, a.width, b.length, b.width}) / grid;
    if (cell > 2.0 * band) return hit_outer ? -1 : 0;
  }
  return -1;
}

// --- bicycle ODE oracle -----------------------------------------------------

struct BicycleOde
{
  double wheelbase;
  double accel;
  double steering;
};

/// Classic RK4 on the continuous rear-axle bicycle ODE.
inline propscore::EgoKinState rk4_bicycle(
  propscore::EgoKinState s, const BicycleOde & ode, double duration, int steps)
{
  const double h = duration / steps;
  const auto deriv = [&](const std::array<double, 4> & y) {
    return std::array<double, 4>{
      y[3] * std::cos(y[2]), y[3] * std::sin(y[2]),
      y[3] * std::tan(ode.steering) / ode.wheelbase, ode.accel};
  };
  std::array<double, 4> y{s.pose.x, s.pose.y, s.pose.heading, s.velocity};
  for (int i = 0; i < steps; ++i) {
    const auto k1 = deriv(y);
    std::array<double, 4> y2;
    for (int j = 0; j < 4; ++j) y2[j] = y[j] + 0.5 * h * k1[j];
    const auto k2 = deriv(y2);
    for (int j = 0; j < 4; ++j) y2[j] = y[j] + 0.5 * h * k2[j];
    const auto k3 = deriv(y2);
    for (int j = 0; j < 4; ++j) y2[j] = y[j] + h * k3[j];
    const auto k4 = deriv(y2);
    for (int j = 0; j < 4; ++j) y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  }
  s.pose = {y[0], y[1], propscore::wrap_angle(y[2])};
  s.velocity = y[3];
  return s;
}

// --- rollout synthesizers ---------------------------------------------------

/// Builds a rollout by sampling closed-form position/heading functions.
inline propscore::Rollout rollout_from_functions(
  const std::function<Vec2(double)> & position, const std::function<double(double)> & heading,
  double duration, double dt)
{
  propscore::Rollout r;
  r.dt = dt;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  for (std::size_t i = 0; i <= n; ++i) {
    const double t = dt * static_cast<double>(i);
    propscore::EgoKinState s;
    const Vec2 p = position(t);
    s.pose = {p.x, p.y, propscore::wrap_angle(heading(t))};
    s.velocity = (position(t + 1e-5) - position(t - 1e-5)).norm() / 2e-5;
    r.states.push_back(s);
  }
  return r;
}

/// Straight rollout at constant speed.
inline propscore::Rollout straight_rollout(double speed, double duration = 4.0, double dt = 0.1)
{
  return rollout_from_functions(
    [speed](double t) { return Vec2{speed * t, 0.0}; }, [](double) { return 0.0; }, duration, dt);
}

/// Straight rollout with a prescribed longitudinal acceleration profile
/// a(t); the position is integrated analytically from v0 via fine substeps.
inline propscore::Rollout straight_accel_rollout(
  double v0, const std::function<double(double)> & accel, double duration = 4.0, double dt = 0.01)
{
  propscore::Rollout r;
  r.dt = dt;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  double x = 0.0, v = v0;
  const int sub = 100;
  for (std::size_t i = 0; i <= n; ++i) {
    propscore::EgoKinState s;
    s.pose = {x, 0.0, 0.0};
    s.velocity = v;
    r.states.push_back(s);
    const double t0 = dt * static_cast<double>(i);
    for (int k = 0; k < sub; ++k) {
      const double h = dt / sub;
      const double tm = t0 + (k + 0.5) * h;
      x += v * h + 0.5 * accel(tm) * h * h;
      v += accel(tm) * h;
    }
  }
  return r;
}

/// Constant-speed rollout with a prescribed yaw-rate profile; positions are
/// integrated at fine substeps.
inline propscore::Rollout yaw_rate_rollout(
  double speed, const std::function<double(double)> & yaw_rate, double duration = 4.0,
  double dt = 0.01)
{
  propscore::Rollout r;
  r.dt = dt;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt));
  double x = 0.0, y = 0.0, h = 0.0;
  const int sub = 100;
  for (std::size_t i = 0; i <= n; ++i) {
    propscore::EgoKinState s;
    s.pose = {x, y, propscore::wrap_angle(h)};
    s.velocity = speed;
    r.states.push_back(s);
    const double t0 = dt * static_cast<double>(i);
    for (int k = 0; k < sub; ++k) {
      const double hs = dt / sub;
      const double tm = t0 + (k + 0.5) * hs;
      const double hm = h + 0.5 * yaw_rate(tm) * hs;
      x += speed * std::cos(hm) * hs;
      y += speed * std::sin(hm) * hs;
      h += yaw_rate(tm) * hs;
    }
  }
  return r;
}

/// A rollout violating exactly one comfort threshold scaled by `factor`
/// (e.g. 1.02 violates, 0.98 stays clean). Index order matches the
/// threshold table: lat_acc, lon_acc, lon_dec, abs_jerk, lon_jerk,
/// yaw_rate, yaw_acc.
inline propscore::Rollout comfort_probe_rollout(
  int which, double factor, const propscore::ComfortThresholds & th = {})
{
  switch (which) {
    case 0: {  // lateral acceleration via steady turn at high speed
      const double v = 10.0;
      const double w = factor * th.lat_acc / v;
      return yaw_rate_rollout(v, [w](double) { return w; });
    }
    case 1: {  // longitudinal acceleration, constant
      const double a = factor * th.lon_acc;
      return straight_accel_rollout(5.0, [a](double) { return a; });
    }
    case 2: {  // longitudinal deceleration, constant
      const double a = -factor * th.lon_dec;
      return straight_accel_rollout(20.0, [a](double) { return a; });
    }
    case 3: {  // absolute jerk via oscillating lateral acceleration
      const double v = 10.0;
      const double b = 2.0;                        // lat-acc oscillation amplitude
      const double c = 2.5;                        // lat-acc offset, keeps |a| smooth
      const double omega = factor * th.abs_jerk / b;
      return yaw_rate_rollout(v, [=](double t) { return (c + b * std::sin(omega * t)) / v; });
    }
    case 4: {  // longitudinal jerk via oscillating acceleration
      const double amp = 1.5;
      const double omega = factor * th.lon_jerk / amp;
      return straight_accel_rollout(10.0, [=](double t) { return amp * std::sin(omega * t); });
    }
    case 5: {  // yaw rate, low speed steady turn
      const double w = factor * th.yaw_rate;
      return yaw_rate_rollout(3.0, [w](double) { return w; });
    }
    case 6: {  // yaw acceleration via oscillating yaw rate
      const double r0 = 0.5;
      const double omega = factor * th.yaw_acc / r0;
      return yaw_rate_rollout(2.0, [=](double t) { return r0 * std::sin(omega * t); });
    }
    default: throw std::logic_error("comfort_probe_rollout: bad index");
  }
}

// --- feasible reference generator -------------------------------------------

struct FeasibleReference
{
  std::vector<propscore::Pose2D> proposal;  // 2 Hz knots (t = 0.5 .. 4.0)
  propscore::Pose2D terminal;               // exact integrated terminal pose
};

/// Integrates the bicycle model at 10 Hz with gentle piecewise-constant
/// steering at the scene's start speed and keeps the 0.5 s knots as the
/// proposal. Speed stays constant; the proportional speed law tracks a
/// ramping reference with a lag of accel/k_speed, so ramps would leak
/// longitudinal error into the terminal-pose check.
inline FeasibleReference feasible_reference(
  propscore::SplitMix64 & rng, const propscore::Scene & scene, const propscore::SimConfig & cfg)
{
  propscore::EgoKinState s;
  s.pose = scene.ego_start.pose;
  s.velocity = scene.ego_start.velocity;
  FeasibleReference out;
  const double dt = cfg.dt();
  const int ticks = static_cast<int>(std::llround(cfg.horizon * cfg.sim_hz));
  double steering = rng.uniform(-0.04, 0.04);
  for (int i = 1; i <= ticks; ++i) {
    if (i % 10 == 0) steering = rng.uniform(-0.04, 0.04);
    s = propscore::bicycle_step(s, 0.0, steering, dt, scene.ego_dims, cfg);
    if (i % 5 == 0) out.proposal.push_back(s.pose);
  }
  out.terminal = s.pose;
  return out;
}

/// Applies a rigid transform to every 2D quantity in a scene. Cameras are
/// left untouched (the planar metrics never consult them).
inline propscore::Scene transform_scene(
  const propscore::Scene & scene, const propscore::RigidTransform2D & tf)
{
  propscore::Scene out = scene;
  out.ego_start.pose = tf.apply(scene.ego_start.pose);
  for (auto & agent : out.agents) {
    for (auto & s : agent.states) s.pose = tf.apply(s.pose);
  }
  for (auto & poly : out.drivable_area) {
    for (auto & p : poly) p = tf.apply(p);
  }
  for (auto & p : out.route.centerline) p = tf.apply(p);
  for (auto & p : out.expert) p = tf.apply(p);
  return out;
}

inline std::vector<propscore::Pose2D> transform_poses(
  const std::vector<propscore::Pose2D> & poses, const propscore::RigidTransform2D & tf)
{
  std::vector<propscore::Pose2D> out;
  out.reserve(poses.size());
  for (const auto & p : poses) out.push_back(tf.apply(p));
  return out;
}

// --- kernel oracle helpers ---------------------------------------------------

/// Independent bilinear interpolation (explicit 4-term weighted sum).
inline std::vector<double> bilinear_oracle(const propscore::FeatureView & view, const Vec2 & p)
{
  std::vector<double> out(view.channels, 0.0);
  if (p.x < 0.0 || p.y < 0.0 || p.x > static_cast<double>(view.width - 1) ||
      p.y > static_cast<double>(view.height - 1)) {
    return out;
  }
  const double xf = std::floor(p.x), yf = std::floor(p.y);
  const auto x0 = static_cast<std::size_t>(xf);
  const auto y0 = static_cast<std::size_t>(yf);
  const std::size_t x1 = std::min(x0 + 1, view.width - 1);
  const std::size_t y1 = std::min(y0 + 1, view.height - 1);
  const double wx1 = p.x - xf, wx0 = 1.0 - wx1;
  const double wy1 = p.y - yf, wy0 = 1.0 - wy1;
  for (std::size_t c = 0; c < view.channels; ++c) {
    out[c] = wx0 * wy0 * view.at(c, y0, x0) + wx1 * wy0 * view.at(c, y0, x1) +
             wx0 * wy1 * view.at(c, y1, x0) + wx1 * wy1 * view.at(c, y1, x1);
  }
  return out;
}

/// Naive re-derivation of deformable attention from the raw weight tensors.
inline std::vector<double> deform_attn_oracle(
  const std::vector<double> & q, const Vec2 & p,
  const std::function<std::vector<double>(const Vec2 &)> & sample,
  const propscore::AttentionBlockWeights & w)
{
  const std::size_t C = w.channels, H = w.heads, K = w.keys, D = C / H;
  std::vector<double> out(C, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    std::vector<double> weights(K);
    double denom = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      double logit = w.weight_b[i * K + j];
      for (std::size_t c = 0; c < C; ++c) logit += w.weight_w[(i * K + j) * C + c] * q[c];
      weights[j] = logit;
    }
    const double mx = *std::max_element(weights.begin(), weights.end());
    for (std::size_t j = 0; j < K; ++j) {
      weights[j] = std::exp(weights[j] - mx);
      denom += weights[j];
    }
    for (std::size_t j = 0; j < K; ++j) {
      const double a = weights[j] / denom;
      double ox = w.offset_b[(i * K + j) * 2], oy = w.offset_b[(i * K + j) * 2 + 1];
      for (std::size_t c = 0; c < C; ++c) {
        ox += w.offset_w[((i * K + j) * 2) * C + c] * q[c];
        oy += w.offset_w[((i * K + j) * 2 + 1) * C + c] * q[c];
      }
      const auto value = sample({p.x + ox, p.y + oy});
      for (std::size_t cc = 0; cc < C; ++cc) {
        for (std::size_t d = 0; d < D; ++d) {
          double wpx = 0.0;
          for (std::size_t c = 0; c < C; ++c) wpx += w.head_in[(i * D + d) * C + c] * value[c];
          out[cc] += w.head_out[(i * C + cc) * D + d] * a * wpx;
        }
      }
    }
  }
  return out;
}

inline propscore::FeatureView random_feature_view(
  std::uint64_t seed, std::size_t channels, std::size_t height, std::size_t width)
{
  propscore::FeatureView view;
  view.camera.view_id = "front";
  view.camera.intrinsics = {200.0, 0.0, 160.0, 0.0, 200.0, 120.0, 0.0, 0.0, 1.0};
  view.camera.rotation = {0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0};
  view.camera.translation = {0.0, 1.6, 0.0};
  view.camera.image_width = 320;
  view.camera.image_height = 240;
  view.channels = channels;
  view.height = height;
  view.width = width;
  view.data.resize(channels * height * width);
  propscore::SplitMix64 rng(seed);
  for (auto & v : view.data) v = rng.uniform(-1.0, 1.0);
  return view;
}

}  // namespace testsupport
