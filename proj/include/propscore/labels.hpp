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
#include <string>
#include <vector>

#include "propscore/core.hpp"
#include "propscore/geometry.hpp"
#include "propscore/metrics.hpp"
#include "propscore/scene.hpp"
#include "propscore/simulator.hpp"

namespace propscore
{

/// Per proposal, per planning step: [on_road, on_route].
struct MappingLabels
{
  std::size_t num_proposals = 0;
  std::size_t num_steps = 0;
  std::vector<std::array<bool, 2>> values;  // (n * num_steps + t)

  std::array<bool, 2> & at(std::size_t n, std::size_t t) { return values[n * num_steps + t]; }
  const std::array<bool, 2> & at(std::size_t n, std::size_t t) const
  {
    return values[n * num_steps + t];
  }
};

/// Corner targets for the two attributed agents; slot 0 = first at-fault,
/// slot 1 = first likely-to-collide. Invalid entries are zero-filled.
struct PredictionTargets
{
  std::size_t num_proposals = 0;
  std::size_t num_steps = 0;
  // (n, t, slot, corner, coord) flattened row-major.
  std::vector<double> corners;
  std::vector<bool> validity;  // (n, t, slot)

  std::size_t validity_index(std::size_t n, std::size_t t, std::size_t slot) const
  {
    return (n * num_steps + t) * 2 + slot;
  }
  std::size_t corner_index(
    std::size_t n, std::size_t t, std::size_t slot, std::size_t corner, std::size_t coord) const
  {
    return (((n * num_steps + t) * 2 + slot) * 4 + corner) * 2 + coord;
  }
};

/// Planning-step labels: the rollout state at each proposal timestamp is
/// checked against the drivable-area union and the route corridor.
inline MappingLabels mapping_labels(
  const std::vector<std::vector<Pose2D>> & proposals, const Scene & scene,
  const std::vector<Rollout> & rollouts)
{
  if (rollouts.size() != proposals.size()) {
    throw ValidationError("mapping_labels: rollout count mismatch");
  }
  const double step = 0.5;
  MappingLabels labels;
  labels.num_proposals = proposals.size();
  labels.num_steps = proposals.empty() ? 0 : proposals.front().size();
  labels.values.assign(labels.num_proposals * labels.num_steps, {false, false});
  const Polyline route = scene.route.polyline();

  for (std::size_t n = 0; n < proposals.size(); ++n) {
    const Rollout & r = rollouts[n];
    for (std::size_t t = 0; t < labels.num_steps; ++t) {
      const double time = step * static_cast<double>(t + 1);
      const auto tick = static_cast<std::size_t>(std::llround(time / r.dt));
      if (tick >= r.states.size()) {
        throw ValidationError("mapping_labels: rollout shorter than planning horizon");
      }
      const OrientedBox box = ego_footprint(r.states[tick].pose, scene.ego_dims);
      bool on_road = true;
      for (const auto & c : box_corners(box)) {
        if (!scene.on_drivable(c)) {
          on_road = false;
          break;
        }
      }
      const auto proj = project_to_polyline(box.center.position(), route);
      const bool on_route = std::abs(proj.signed_lateral) <= scene.route.half_width &&
                            !proj.clamped;
      labels.at(n, t) = {on_road, on_route};
    }
  }
  return labels;
}

inline PredictionTargets prediction_targets(
  const std::vector<std::vector<Pose2D>> & proposals, const Scene & scene,
  const std::vector<ScoreCard> & scorecards)
{
  if (scorecards.size() != proposals.size()) {
    throw ValidationError("prediction_targets: scorecard count mismatch");
  }
  const double step = 0.5;
  PredictionTargets targets;
  targets.num_proposals = proposals.size();
  targets.num_steps = proposals.empty() ? 0 : proposals.front().size();
  targets.corners.assign(targets.num_proposals * targets.num_steps * 2 * 4 * 2, 0.0);
  targets.validity.assign(targets.num_proposals * targets.num_steps * 2, false);

  const auto find_agent = [&](const std::string & id) -> const AgentTrack & {
    const auto it = std::find_if(
      scene.agents.begin(), scene.agents.end(),
      [&](const AgentTrack & a) { return a.id == id; });
    if (it == scene.agents.end()) {
      throw ValidationError("prediction_targets: attribution references unknown agent '" + id +
                            "'");
    }
    return *it;
  };

  for (std::size_t n = 0; n < proposals.size(); ++n) {
    const std::array<const std::optional<AgentAttribution> *, 2> slots{
      &scorecards[n].first_at_fault_agent, &scorecards[n].first_ttc_agent};
    for (std::size_t slot = 0; slot < 2; ++slot) {
      if (!slots[slot]->has_value()) continue;
      const AgentTrack & track = find_agent((*slots[slot])->agent_id);
      for (std::size_t t = 0; t < targets.num_steps; ++t) {
        const double time = step * static_cast<double>(t + 1);
        const auto st = agent_state_at(track, time);
        if (!st || !st->valid) continue;
        targets.validity[targets.validity_index(n, t, slot)] = true;
        const auto corners = box_corners(agent_box(st->pose, track.dims));
        for (std::size_t c = 0; c < 4; ++c) {
          targets.corners[targets.corner_index(n, t, slot, c, 0)] = corners[c].x;
          targets.corners[targets.corner_index(n, t, slot, c, 1)] = corners[c].y;
        }
      }
    }
  }
  return targets;
}

}  // namespace propscore
