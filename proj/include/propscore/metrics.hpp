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
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "propscore/core.hpp"
#include "propscore/geometry.hpp"
#include "propscore/scene.hpp"
#include "propscore/simulator.hpp"

namespace propscore
{

struct SubMetrics
{
  double nc = 1.0;       // {0, 0.5, 1}
  double dac = 1.0;      // {0, 1}
  double ttc = 1.0;      // {0, 1}
  double comfort = 1.0;  // {0, 1}
  double ep = 1.0;       // [0, 1]
  bool ep_discarded = false;
};

struct ComfortThresholds
{
  double lat_acc = 4.89;   // m/s^2
  double lon_acc = 2.40;   // m/s^2
  double lon_dec = 4.05;   // m/s^2
  double abs_jerk = 8.37;  // m/s^3
  double lon_jerk = 4.13;  // m/s^3
  double yaw_rate = 0.95;  // rad/s
  double yaw_acc = 1.93;   // rad/s^2
};

inline ComfortThresholds comfort_thresholds_from_json(const nlohmann::json & j)
{
  ComfortThresholds th;
  const auto set = [&](const char * key, double & field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  set("lat_acc", th.lat_acc);
  set("lon_acc", th.lon_acc);
  set("lon_dec", th.lon_dec);
  set("abs_jerk", th.abs_jerk);
  set("lon_jerk", th.lon_jerk);
  set("yaw_rate", th.yaw_rate);
  set("yaw_acc", th.yaw_acc);
  for (double v : {th.lat_acc, th.lon_acc, th.lon_dec, th.abs_jerk, th.lon_jerk, th.yaw_rate,
                   th.yaw_acc}) {
    if (!(v > 0.0)) throw ValidationError("comfort thresholds must be positive");
  }
  return th;
}

struct AgentAttribution
{
  std::string agent_id;
  std::size_t tick = 0;
};

struct ScoreCard
{
  SubMetrics sub{};
  double pdms = 1.0;
  std::optional<AgentAttribution> first_at_fault_agent;
  std::optional<AgentAttribution> first_ttc_agent;
};

/// Footprint box of the ego at a rear-axle pose: geometric center sits
/// wheelbase/2 ahead of the rear axle (rear overhang = (length-wheelbase)/2).
inline OrientedBox ego_footprint(const Pose2D & rear_axle_pose, const VehicleDims & dims)
{
  const double offset = 0.5 * dims.wheelbase;
  OrientedBox box;
  box.center.x = rear_axle_pose.x + offset * std::cos(rear_axle_pose.heading);
  box.center.y = rear_axle_pose.y + offset * std::sin(rear_axle_pose.heading);
  box.center.heading = rear_axle_pose.heading;
  box.length = dims.length;
  box.width = dims.width;
  return box;
}

inline OrientedBox agent_box(const Pose2D & pose, const VehicleDims & dims)
{
  return OrientedBox{pose, dims.length, dims.width};
}

/// Speed below which the ego counts as stationary for the at-fault exemption.
inline constexpr double kStationarySpeed = 0.05;

struct NcResult
{
  double value = 1.0;
  std::optional<AgentAttribution> first_agent;
};

inline NcResult no_at_fault_collision(const Rollout & r, const Scene & scene)
{
  NcResult res;
  bool any_road_user = false;
  bool any_static = false;
  for (std::size_t i = 0; i < r.states.size(); ++i) {
    const auto & s = r.states[i];
    if (s.velocity < kStationarySpeed) continue;  // stationary ego is never at fault
    const OrientedBox ego = ego_footprint(s.pose, scene.ego_dims);
    const double t = r.time_at(i);
    std::optional<AgentAttribution> tick_hit;
    bool tick_road_user = false;
    for (const auto & agent : scene.agents) {
      const auto st = agent_state_at(agent, t);
      if (!st || !st->valid) continue;
      if (!boxes_intersect(ego, agent_box(st->pose, agent.dims))) continue;
      const bool road_user = is_road_user(agent.category);
      any_road_user = any_road_user || road_user;
      any_static = any_static || !road_user;
      // Earliest tick wins, then road users over static objects, then
      // smallest id.
      const bool better = !tick_hit || (road_user && !tick_road_user) ||
                          (road_user == tick_road_user && agent.id < tick_hit->agent_id);
      if (better) {
        tick_hit = AgentAttribution{agent.id, i};
        tick_road_user = road_user;
      }
    }
    if (tick_hit && !res.first_agent) res.first_agent = tick_hit;
    if (any_road_user) break;
  }
  res.value = any_road_user ? 0.0 : (any_static ? 0.5 : 1.0);
  return res;
}

inline double drivable_area_compliance(const Rollout & r, const Scene & scene, ScoringMode mode)
{
  if (scene.drivable_area.empty()) {
    throw ValidationError("drivable_area_compliance: no drivable area");
  }
  for (const auto & s : r.states) {
    const auto corners = box_corners(ego_footprint(s.pose, scene.ego_dims));
    for (const auto & c : corners) {
      if (!scene.on_drivable(c)) return 0.0;
    }
  }
  if (mode == ScoringMode::bench2drive) {
    const Polyline route = scene.route.polyline();
    bool any_on_route = false;
    for (const auto & s : r.states) {
      const Vec2 center = ego_footprint(s.pose, scene.ego_dims).center.position();
      const auto proj = project_to_polyline(center, route);
      if (std::abs(proj.signed_lateral) <= scene.route.half_width && !proj.clamped) {
        any_on_route = true;
        break;
      }
    }
    if (!any_on_route) return 0.0;
  }
  return 1.0;
}

struct TtcResult
{
  double value = 1.0;
  std::optional<AgentAttribution> first_agent;
};

/// Projects the ego forward at constant velocity and heading in 0.1 s steps;
/// a projected overlap strictly before 1.0 s sets the metric to 0.
inline TtcResult time_to_collision_metric(const Rollout & r, const Scene & scene)
{
  constexpr double kStep = 0.1;
  constexpr int kSteps = 9;  // 0.1 .. 0.9 s, strictly below the 1 s bound
  TtcResult res;
  for (std::size_t i = 0; i < r.states.size() && !res.first_agent; ++i) {
    const auto & s = r.states[i];
    const double t0 = r.time_at(i);
    for (int k = 1; k <= kSteps && !res.first_agent; ++k) {
      const double tau = kStep * static_cast<double>(k);
      Pose2D projected = s.pose;
      projected.x += s.velocity * tau * std::cos(s.pose.heading);
      projected.y += s.velocity * tau * std::sin(s.pose.heading);
      const OrientedBox ego = ego_footprint(projected, scene.ego_dims);
      std::optional<AgentAttribution> hit;
      for (const auto & agent : scene.agents) {
        const auto st = agent_state_at(agent, t0 + tau);
        if (!st || !st->valid) continue;
        if (!boxes_intersect(ego, agent_box(st->pose, agent.dims))) continue;
        if (!hit || agent.id < hit->agent_id) hit = AgentAttribution{agent.id, i};
      }
      if (hit) res.first_agent = hit;
    }
  }
  res.value = res.first_agent ? 0.0 : 1.0;
  return res;
}

/// Maxima of the expert rollout used by Bench2Drive comfort.
struct ExpertComfortBounds
{
  double max_acc_mag = 0.0;
  double max_yaw_rate = 0.0;
};

inline ExpertComfortBounds expert_comfort_bounds(const KinematicProfile & expert)
{
  ExpertComfortBounds b;
  for (double a : expert.acc_mag) b.max_acc_mag = std::max(b.max_acc_mag, std::abs(a));
  for (double w : expert.yaw_rate) b.max_yaw_rate = std::max(b.max_yaw_rate, std::abs(w));
  return b;
}

inline double comfort_metric(
  const KinematicProfile & p, const ComfortThresholds & th, ScoringMode mode,
  const std::optional<ExpertComfortBounds> & expert = std::nullopt)
{
  const std::size_t n = p.speed.size();
  if (mode == ScoringMode::bench2drive) {
    if (!expert) throw ValidationError("comfort_metric: bench2drive needs an expert profile");
    constexpr double eps = 1e-9;  // the expert itself must pass
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(p.acc_mag[i]) > expert->max_acc_mag + eps) return 0.0;
      if (std::abs(p.yaw_rate[i]) > expert->max_yaw_rate + eps) return 0.0;
    }
    return 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(p.lat_acc[i]) > th.lat_acc) return 0.0;
    if (p.lon_acc[i] > th.lon_acc) return 0.0;
    if (-p.lon_acc[i] > th.lon_dec) return 0.0;
    if (std::abs(p.abs_jerk[i]) > th.abs_jerk) return 0.0;
    if (std::abs(p.lon_jerk[i]) > th.lon_jerk) return 0.0;
    if (std::abs(p.yaw_rate[i]) > th.yaw_rate) return 0.0;
    if (std::abs(p.yaw_acc[i]) > th.yaw_acc) return 0.0;
  }
  return 1.0;
}

struct EpResult
{
  double value = 1.0;
  bool discarded = false;
};

inline double route_progress(const Rollout & r, const Scene & scene, const Polyline & route)
{
  const Vec2 start = ego_footprint(r.states.front().pose, scene.ego_dims).center.position();
  const Vec2 end = ego_footprint(r.states.back().pose, scene.ego_dims).center.position();
  return project_to_polyline(end, route).arclength - project_to_polyline(start, route).arclength;
}

inline EpResult ego_progress(
  const Rollout & r, const Scene & scene, ScoringMode mode,
  const std::optional<Rollout> & expert_rollout = std::nullopt,
  bool collision_free_and_on_road = true)
{
  const Polyline route = scene.route.polyline();
  const double progress = route_progress(r, scene, route);

  if (mode == ScoringMode::navsim) {
    double bound = scene.route.progress_upper_bound;
    if (bound <= 0.0 && !scene.expert.empty()) {
      // Fallback: arc-length progress of the expert trajectory.
      double len = (scene.expert.front().position() - scene.ego_start.pose.position()).norm();
      for (std::size_t i = 1; i < scene.expert.size(); ++i) {
        len += (scene.expert[i].position() - scene.expert[i - 1].position()).norm();
      }
      bound = len;
    }
    if (bound < 5.0 || progress < 0.0) {
      return EpResult{1.0, true};  // discarded; neutral value with explicit flag
    }
    return EpResult{std::clamp(progress / bound, 0.0, 1.0), false};
  }

  // Bench2Drive: ratio to expert progress, conditioned on being
  // collision-free and on-road; ratios above 1 take their reciprocal.
  if (!expert_rollout) throw ValidationError("ego_progress: bench2drive needs expert rollout");
  if (!collision_free_and_on_road) return EpResult{0.0, false};
  const double expert_progress = route_progress(*expert_rollout, scene, route);
  if (expert_progress <= 0.0) return EpResult{1.0, true};
  double ratio = progress / expert_progress;
  if (ratio < 0.0) ratio = 0.0;
  if (ratio > 1.0) ratio = 1.0 / ratio;
  return EpResult{ratio, false};
}

/// Aggregate PDM score: NC * DAC * (5 EP + 5 TTC + 2 Comf) / 12.
inline double pdm_score(const SubMetrics & sub)
{
  return sub.nc * sub.dac * (5.0 * sub.ep + 5.0 * sub.ttc + 2.0 * sub.comfort) / 12.0;
}

struct ProposalEvaluation
{
  Rollout rollout;
  ScoreCard card;
};

inline ProposalEvaluation evaluate_proposal(
  const std::vector<Pose2D> & proposal, const Scene & scene, const SimConfig & cfg,
  const ComfortThresholds & th = ComfortThresholds{})
{
  ProposalEvaluation ev;
  ev.rollout = cfg.mode == ScoringMode::navsim ? lqr_track(proposal, scene, cfg)
                                               : replay_track(proposal, scene, cfg);
  const KinematicProfile profile = kinematic_profile(ev.rollout);

  const auto nc = no_at_fault_collision(ev.rollout, scene);
  ev.card.sub.nc = nc.value;
  ev.card.first_at_fault_agent = nc.first_agent;

  ev.card.sub.dac = drivable_area_compliance(ev.rollout, scene, cfg.mode);

  const auto ttc = time_to_collision_metric(ev.rollout, scene);
  ev.card.sub.ttc = ttc.value;
  ev.card.first_ttc_agent = ttc.first_agent;

  if (cfg.mode == ScoringMode::navsim) {
    ev.card.sub.comfort = comfort_metric(profile, th, cfg.mode);
    const auto ep = ego_progress(ev.rollout, scene, cfg.mode);
    ev.card.sub.ep = ep.value;
    ev.card.sub.ep_discarded = ep.discarded;
  } else {
    if (scene.expert.empty()) {
      throw ValidationError("evaluate_proposal: bench2drive scene lacks an expert trajectory");
    }
    const Rollout expert_rollout = replay_track(scene.expert, scene, cfg);
    const KinematicProfile expert_profile = kinematic_profile(expert_rollout);
    ev.card.sub.comfort =
      comfort_metric(profile, th, cfg.mode, expert_comfort_bounds(expert_profile));
    const bool clean = ev.card.sub.nc >= 1.0 && ev.card.sub.dac >= 1.0;
    const auto ep = ego_progress(ev.rollout, scene, cfg.mode, expert_rollout, clean);
    ev.card.sub.ep = ep.value;
    ev.card.sub.ep_discarded = ep.discarded;
  }
  ev.card.pdms = pdm_score(ev.card.sub);
  return ev;
}

inline std::vector<ScoreCard> score_proposals(
  const std::vector<std::vector<Pose2D>> & proposals, const Scene & scene, const SimConfig & cfg,
  const ComfortThresholds & th = ComfortThresholds{})
{
  if (proposals.empty()) throw ValidationError("score_proposals: empty proposal set");
  for (const auto & p : proposals) {
    if (p.size() != proposals.front().size()) {
      throw ValidationError("score_proposals: inconsistent proposal lengths");
    }
  }
  std::vector<ScoreCard> cards;
  cards.reserve(proposals.size());
  for (const auto & p : proposals) cards.push_back(evaluate_proposal(p, scene, cfg, th).card);
  return cards;
}

}  // namespace propscore
