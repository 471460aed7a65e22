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

#include <array>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "propscore/core.hpp"
#include "propscore/scene.hpp"

namespace propscore
{

/// Ego state with the pose referenced at the rear axle.
struct EgoKinState
{
  Pose2D pose{};
  double velocity = 0.0;
  double acceleration = 0.0;
  double steering = 0.0;
};

struct SimConfig
{
  ScoringMode mode = ScoringMode::navsim;
  double sim_hz = 10.0;       // bench2drive: 2
  double horizon = 4.0;       // seconds; bench2drive: 3.0
  double q_lateral = 1.0;     // LQR state cost, lateral error
  double q_heading = 10.0;    // LQR state cost, heading error
  double r_control = 1.0;     // LQR control cost
  double k_speed = 2.0;       // proportional speed gain
  double steering_limit = 0.83;   // radians
  double accel_limit = 2.40;      // m/s^2
  double decel_limit = 4.05;      // m/s^2 (magnitude)
  bool allow_reverse = false;

  double dt() const { return 1.0 / sim_hz; }

  static SimConfig defaults_for(ScoringMode mode)
  {
    SimConfig cfg;
    cfg.mode = mode;
    if (mode == ScoringMode::bench2drive) {
      cfg.sim_hz = 2.0;
      cfg.horizon = 3.0;
    }
    return cfg;
  }
};

inline SimConfig sim_config_from_json(const nlohmann::json & j)
{
  SimConfig cfg;
  if (j.contains("mode")) cfg.mode = scoring_mode_from_string(j.at("mode").get<std::string>());
  cfg = SimConfig::defaults_for(cfg.mode);
  const auto set = [&](const char * key, double & field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  set("sim_hz", cfg.sim_hz);
  set("horizon", cfg.horizon);
  set("q_lateral", cfg.q_lateral);
  set("q_heading", cfg.q_heading);
  set("r_control", cfg.r_control);
  set("k_speed", cfg.k_speed);
  set("steering_limit", cfg.steering_limit);
  set("accel_limit", cfg.accel_limit);
  set("decel_limit", cfg.decel_limit);
  if (j.contains("allow_reverse")) cfg.allow_reverse = j.at("allow_reverse").get<bool>();
  if (!(cfg.sim_hz > 0.0) || !(cfg.horizon > 0.0)) {
    throw ValidationError("sim config: sim_hz and horizon must be positive");
  }
  if (!(cfg.r_control > 0.0) || cfg.q_lateral < 0.0 || cfg.q_heading < 0.0) {
    throw ValidationError("sim config: invalid LQR costs");
  }
  return cfg;
}

/// Per-tick kinematic quantities derived from a pose series by finite
/// differences (central in the interior, second-order one-sided at the ends).
struct KinematicProfile
{
  std::vector<double> speed;
  std::vector<double> lon_acc;
  std::vector<double> lat_acc;
  std::vector<double> acc_mag;
  std::vector<double> abs_jerk;
  std::vector<double> lon_jerk;
  std::vector<double> yaw_rate;
  std::vector<double> yaw_acc;
};

struct Rollout
{
  double dt = 0.1;
  std::vector<EgoKinState> states;  // tick 0 = ego start

  double time_at(std::size_t i) const { return static_cast<double>(i) * dt; }
};

/// Single-step rear-axle bicycle update; controls are clamped to the
/// configured limits before integration. The position advances along the
/// half-step heading at the half-step speed (midpoint rule), which keeps
/// per-tick updates second-order accurate on constant-control arcs.
inline EgoKinState bicycle_step(
  const EgoKinState & s, double accel, double steering, double dt, const VehicleDims & dims,
  const SimConfig & cfg)
{
  accel = std::clamp(accel, -cfg.decel_limit, cfg.accel_limit);
  steering = std::clamp(steering, -cfg.steering_limit, cfg.steering_limit);
  const double v_mid = s.velocity + 0.5 * accel * dt;
  const double yaw_rate = v_mid * std::tan(steering) / dims.wheelbase;
  const double h_mid = s.pose.heading + 0.5 * yaw_rate * dt;
  EgoKinState out;
  out.pose.x = s.pose.x + v_mid * std::cos(h_mid) * dt;
  out.pose.y = s.pose.y + v_mid * std::sin(h_mid) * dt;
  out.pose.heading = wrap_angle(s.pose.heading + yaw_rate * dt);
  out.velocity = s.velocity + accel * dt;
  if (!cfg.allow_reverse && out.velocity < 0.0) out.velocity = 0.0;
  out.acceleration = accel;
  out.steering = steering;
  return out;
}

namespace detail
{

/// Infinite-horizon discrete LQR gain for the lateral error system
/// A = [[1, v dt],[0, 1]], B = [0, dt]^T, via Riccati iteration to a 1e-10
/// fixed point. Returns K = [k_e, k_psi].
inline std::array<double, 2> lqr_gain(double v, double dt, const SimConfig & cfg)
{
  const double a01 = v * dt;
  const double b1 = dt;
  // P symmetric: [p00 p01; p01 p11]
  double p00 = cfg.q_lateral, p01 = 0.0, p11 = cfg.q_heading;
  for (int iter = 0; iter < 10000; ++iter) {
    // S = R + B'PB ; K = S^{-1} B'PA
    const double S = cfg.r_control + b1 * b1 * p11;
    const double bpa0 = b1 * (p01);
    const double bpa1 = b1 * (p01 * a01 + p11);
    const double k0 = bpa0 / S;
    const double k1 = bpa1 / S;
    // P' = Q + A'PA - A'PB K
    const double apa00 = p00;
    const double apa01 = p00 * a01 + p01;
    const double apa11 = a01 * (p00 * a01 + p01) + (p01 * a01 + p11);
    const double apb0 = b1 * p01;
    const double apb1 = b1 * (a01 * p01 + p11);
    const double n00 = cfg.q_lateral + apa00 - apb0 * k0;
    const double n01 = apa01 - apb0 * k1;
    const double n10 = apa01 - apb1 * k0;
    const double n11 = cfg.q_heading + apa11 - apb1 * k1;
    const double m01 = 0.5 * (n01 + n10);
    const double delta = std::max(
      {std::abs(n00 - p00), std::abs(m01 - p01), std::abs(n11 - p11)});
    p00 = n00;
    p01 = m01;
    p11 = n11;
    if (delta < 1e-10) break;
  }
  const double S = cfg.r_control + b1 * b1 * p11;
  return {b1 * p01 / S, b1 * (p01 * a01 + p11) / S};
}

struct ReferenceSample
{
  Pose2D pose{};
  double speed = 0.0;     // m/s, from position differences
  double yaw_rate = 0.0;  // rad/s, feedforward
};

inline std::vector<ReferenceSample> build_reference(
  const std::vector<std::pair<double, Pose2D>> & knots, double hz)
{
  const auto dense = resample_trajectory(knots, hz);
  const double dt = 1.0 / hz;
  std::vector<ReferenceSample> ref(dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    ref[i].pose = dense[i].second;
    if (i + 1 < dense.size()) {
      ref[i].speed = (dense[i + 1].second.position() - dense[i].second.position()).norm() / dt;
      ref[i].yaw_rate = angle_diff(dense[i + 1].second.heading, dense[i].second.heading) / dt;
    } else {
      ref[i].speed = ref[i - 1].speed;
      ref[i].yaw_rate = ref[i - 1].yaw_rate;
    }
  }
  return ref;
}

}  // namespace detail

/// NAVSIM-mode rollout: densifies the proposal to sim_hz and tracks it with a
/// decoupled lateral LQR (yaw-rate command with reference feedforward) plus
/// proportional speed control.
inline Rollout lqr_track(
  const std::vector<Pose2D> & proposal, const Scene & scene, const SimConfig & cfg)
{
  if (proposal.empty()) throw ValidationError("lqr_track: empty proposal");
  for (const auto & p : proposal) check_finite_pose(p, "proposal");

  const double step = 0.5;  // planning step interval
  std::vector<std::pair<double, Pose2D>> knots;
  knots.reserve(proposal.size() + 1);
  knots.emplace_back(0.0, scene.ego_start.pose);
  for (std::size_t i = 0; i < proposal.size(); ++i) {
    knots.emplace_back(step * static_cast<double>(i + 1), proposal[i]);
  }
  auto ref = detail::build_reference(knots, cfg.sim_hz);

  const double dt = cfg.dt();
  const auto n_ticks = static_cast<std::size_t>(std::llround(cfg.horizon * cfg.sim_hz));
  Rollout rollout;
  rollout.dt = dt;
  rollout.states.reserve(n_ticks + 1);
  EgoKinState s;
  s.pose = scene.ego_start.pose;
  s.velocity = scene.ego_start.velocity;
  s.acceleration = scene.ego_start.acceleration;
  rollout.states.push_back(s);

  for (std::size_t i = 0; i < n_ticks; ++i) {
    const auto & r = ref[std::min(i, ref.size() - 1)];
    // Lateral/heading error in the reference frame.
    const Vec2 delta = s.pose.position() - r.pose.position();
    const double ch = std::cos(r.pose.heading);
    const double sh = std::sin(r.pose.heading);
    const double e_lat = -sh * delta.x + ch * delta.y;
    const double e_psi = angle_diff(s.pose.heading, r.pose.heading);
    const auto gain = detail::lqr_gain(std::max(s.velocity, 0.5), dt, cfg);
    const double yaw_rate_cmd = r.yaw_rate - gain[0] * e_lat - gain[1] * e_psi;
    const double curvature = yaw_rate_cmd / std::max(s.velocity, 0.5);
    const double steering = std::atan(curvature * scene.ego_dims.wheelbase);
    const double accel = std::clamp(
      cfg.k_speed * (r.speed - s.velocity), -cfg.decel_limit, cfg.accel_limit);
    s = bicycle_step(s, accel, steering, dt, scene.ego_dims, cfg);
    rollout.states.push_back(s);
  }
  return rollout;
}

/// Bench2Drive-mode rollout: the perfect controller reproduces the proposal
/// poses exactly at 2 Hz; velocity and acceleration come from finite
/// differences of the positions.
inline Rollout replay_track(
  const std::vector<Pose2D> & proposal, const Scene & scene, const SimConfig & cfg)
{
  if (proposal.empty()) throw ValidationError("replay_track: empty proposal");
  const double dt = cfg.dt();
  Rollout rollout;
  rollout.dt = dt;
  rollout.states.resize(proposal.size() + 1);
  rollout.states[0].pose = scene.ego_start.pose;
  for (std::size_t i = 0; i < proposal.size(); ++i) {
    rollout.states[i + 1].pose = proposal[i];
  }
  const std::size_t n = rollout.states.size();
  std::vector<double> vx(n), vy(n);
  const auto pos = [&](std::size_t i) { return rollout.states[i].pose.position(); };
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 v;
    if (n < 3) {
      v = (pos(n - 1) - pos(0)) * (1.0 / dt);
    } else if (i == 0) {
      v = (pos(0) * -3.0 + pos(1) * 4.0 - pos(2)) * (1.0 / (2.0 * dt));
    } else if (i == n - 1) {
      v = (pos(n - 1) * 3.0 - pos(n - 2) * 4.0 + pos(n - 3)) * (1.0 / (2.0 * dt));
    } else {
      v = (pos(i + 1) - pos(i - 1)) * (1.0 / (2.0 * dt));
    }
    vx[i] = v.x;
    vy[i] = v.y;
  }
  for (std::size_t i = 0; i < n; ++i) {
    rollout.states[i].velocity = std::hypot(vx[i], vy[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    double a;
    if (n < 3) {
      a = (rollout.states[n - 1].velocity - rollout.states[0].velocity) / dt;
    } else if (i == 0) {
      a = (-3.0 * rollout.states[0].velocity + 4.0 * rollout.states[1].velocity -
           rollout.states[2].velocity) /
          (2.0 * dt);
    } else if (i == n - 1) {
      a = (3.0 * rollout.states[n - 1].velocity - 4.0 * rollout.states[n - 2].velocity +
           rollout.states[n - 3].velocity) /
          (2.0 * dt);
    } else {
      a = (rollout.states[i + 1].velocity - rollout.states[i - 1].velocity) / (2.0 * dt);
    }
    rollout.states[i].acceleration = a;
  }
  return rollout;
}

namespace detail
{

inline std::vector<double> differentiate(const std::vector<double> & f, double dt)
{
  const std::size_t n = f.size();
  std::vector<double> d(n);
  d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * dt);
  d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dt);
  return d;
}

}  // namespace detail

inline KinematicProfile kinematic_profile(const Rollout & r)
{
  const std::size_t n = r.states.size();
  if (n < 3) throw ValidationError("kinematic_profile: needs at least 3 states");
  const double dt = r.dt;
  std::vector<double> x(n), y(n), heading_unwrapped(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = r.states[i].pose.x;
    y[i] = r.states[i].pose.y;
    heading_unwrapped[i] =
      i == 0 ? r.states[0].pose.heading
             : heading_unwrapped[i - 1] +
                 angle_diff(r.states[i].pose.heading, r.states[i - 1].pose.heading);
  }
  const auto vx = detail::differentiate(x, dt);
  const auto vy = detail::differentiate(y, dt);
  const auto ax = detail::differentiate(vx, dt);
  const auto ay = detail::differentiate(vy, dt);

  KinematicProfile p;
  p.speed.resize(n);
  p.lon_acc.resize(n);
  p.lat_acc.resize(n);
  p.acc_mag.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    p.speed[i] = std::hypot(vx[i], vy[i]);
    const double ch = std::cos(r.states[i].pose.heading);
    const double sh = std::sin(r.states[i].pose.heading);
    p.lon_acc[i] = ax[i] * ch + ay[i] * sh;
    p.acc_mag[i] = std::hypot(ax[i], ay[i]);
  }
  p.yaw_rate = detail::differentiate(heading_unwrapped, dt);
  p.yaw_acc = detail::differentiate(p.yaw_rate, dt);
  for (std::size_t i = 0; i < n; ++i) p.lat_acc[i] = p.speed[i] * p.yaw_rate[i];
  p.abs_jerk = detail::differentiate(p.acc_mag, dt);
  p.lon_jerk = detail::differentiate(p.lon_acc, dt);
  return p;
}

}  // namespace propscore
