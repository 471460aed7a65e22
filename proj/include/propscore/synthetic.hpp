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

#include <cstdint>
#include <string>
#include <vector>

#include "propscore/core.hpp"
#include "propscore/metrics.hpp"
#include "propscore/scene.hpp"

namespace propscore
{

/// SplitMix64; fixed algorithm so identical seeds give identical scenes on
/// every platform.
class SplitMix64
{
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next()
  {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

private:
  std::uint64_t state_;
};

struct SyntheticSpec
{
  ScoringMode mode = ScoringMode::navsim;
  double road_half_width = 8.0;  // meters, [4, 20]
  int max_agents = 4;            // [0, 12]
  double min_speed = 2.0;        // m/s
  double max_speed = 12.0;       // m/s, <= 20
  int horizon_steps = 8;         // T proposal poses at 0.5 s
  int max_retries = 20;

  void validate() const
  {
    if (road_half_width < 4.0 || road_half_width > 20.0) {
      throw ValidationError("gen_synthetic: road_half_width outside [4, 20]");
    }
    if (max_agents < 0 || max_agents > 12) {
      throw ValidationError("gen_synthetic: max_agents outside [0, 12]");
    }
    if (!(min_speed >= 1.5) || !(max_speed <= 20.0) || !(min_speed <= max_speed)) {
      throw ValidationError("gen_synthetic: speeds outside [1.5, 20]");
    }
    if (horizon_steps < 2) throw ValidationError("gen_synthetic: horizon_steps < 2");
  }
};

namespace detail
{

inline Scene build_candidate_scene(SplitMix64 & rng, const SyntheticSpec & spec)
{
  Scene scene;
  scene.mode = spec.mode;
  scene.ego_dims = {4.5, 2.0, 2.8};
  const double speed = rng.uniform(spec.min_speed, spec.max_speed);
  scene.ego_start = {Pose2D{0.0, 0.0, 0.0}, speed, 0.0};

  const int steps = spec.horizon_steps;
  const double horizon = 0.5 * static_cast<double>(steps);
  const double travel = speed * horizon;
  const double road_end = travel + 40.0;
  const double hw = spec.road_half_width;

  scene.drivable_area = {
    {{-20.0, -hw}, {road_end, -hw}, {road_end, hw}, {-20.0, hw}}};
  scene.route.centerline = {{-15.0, 0.0}, {road_end - 5.0, 0.0}};
  scene.route.half_width = hw;
  scene.route.progress_upper_bound = travel;

  scene.expert.reserve(steps);
  for (int i = 1; i <= steps; ++i) {
    scene.expert.push_back({speed * 0.5 * static_cast<double>(i), 0.0, 0.0});
  }

  const int agent_count = spec.max_agents > 0 ? rng.uniform_int(spec.max_agents + 1) : 0;
  for (int a = 0; a < agent_count; ++a) {
    AgentTrack track;
    track.id = "agent_" + std::to_string(a);
    const int kind = rng.uniform_int(4);
    const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    if (kind == 0) {
      // Lead vehicle in-lane, at least matching the ego speed so the gap
      // never closes.
      track.category = AgentCategory::vehicle;
      track.dims = {4.5, 2.0, 2.8};
      const double gap = travel + rng.uniform(25.0, 40.0);
      const double v = speed + rng.uniform(0.0, 3.0);
      for (int i = 0; i <= 2 * steps; ++i) {
        const double t = 0.5 * static_cast<double>(i);
        track.states.push_back({t, {gap + v * t, 0.0, 0.0}, v, true});
      }
    } else if (kind == 1) {
      // Parallel vehicle well off the road.
      track.category = AgentCategory::vehicle;
      track.dims = {4.5, 2.0, 2.8};
      const double y = side * (hw + rng.uniform(5.0, 12.0));
      const double x0 = rng.uniform(-10.0, travel);
      const double v = rng.uniform(2.0, 12.0);
      for (int i = 0; i <= 2 * steps; ++i) {
        const double t = 0.5 * static_cast<double>(i);
        track.states.push_back({t, {x0 + v * t, y, 0.0}, v, true});
      }
    } else if (kind == 2) {
      // Pedestrian or bicycle walking parallel, off the road.
      track.category = rng.uniform() < 0.5 ? AgentCategory::pedestrian : AgentCategory::bicycle;
      track.dims = {0.8, 0.8, 0.5};
      const double y = side * (hw + rng.uniform(4.0, 8.0));
      const double x0 = rng.uniform(0.0, travel);
      const double v = rng.uniform(0.5, 2.0);
      for (int i = 0; i <= 2 * steps; ++i) {
        const double t = 0.5 * static_cast<double>(i);
        track.states.push_back({t, {x0 + v * t, y, 0.0}, v, true});
      }
    } else {
      // Static object off the road; single state held over the whole span.
      track.category = AgentCategory::static_object;
      track.dims = {1.0, 1.0, 0.5};
      const double y = side * (hw + rng.uniform(4.0, 10.0));
      const double x0 = rng.uniform(-10.0, travel + 10.0);
      track.states.push_back({0.0, {x0, y, 0.0}, 0.0, true});
    }
    scene.agents.push_back(std::move(track));
  }

  // Front pinhole camera looking along +x, 1.6 m above the road.
  CameraModel cam;
  cam.view_id = "front";
  cam.intrinsics = {200.0, 0.0, 160.0, 0.0, 200.0, 120.0, 0.0, 0.0, 1.0};
  cam.rotation = {0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0};
  cam.translation = {0.0, 1.6, 0.0};
  cam.image_width = 320;
  cam.image_height = 240;
  scene.cameras.push_back(cam);

  return scene;
}

}  // namespace detail

/// Deterministic synthetic scene factory. The generated expert trajectory is
/// collision-free, on-road, on-route, and comfortable; this is verified by
/// scoring the expert and retrying with fresh draws on failure.
inline Scene gen_synthetic(std::uint64_t seed, const SyntheticSpec & spec = SyntheticSpec{})
{
  spec.validate();
  SplitMix64 rng(seed * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL);
  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    Scene scene = detail::build_candidate_scene(rng, spec);
    scene.validate();
    const SimConfig cfg = SimConfig::defaults_for(spec.mode);
    const auto card = evaluate_proposal(scene.expert, scene, cfg).card;
    if (card.sub.nc >= 1.0 && card.sub.dac >= 1.0 && card.sub.ttc >= 1.0 &&
        card.sub.comfort >= 1.0 && card.sub.ep >= 0.95) {
      return scene;
    }
  }
  throw ValidationError("gen_synthetic: no feasible scene after bounded retries");
}

}  // namespace propscore
