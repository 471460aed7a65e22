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

#include <catch2/catch_amalgamated.hpp>

#include "propscore/simulator.hpp"
#include "propscore/synthetic.hpp"
#include "support.hpp"

using namespace propscore;

namespace
{

Scene straight_scene(double speed)
{
  SyntheticSpec spec;
  spec.max_agents = 0;
  spec.min_speed = spec.max_speed = speed;
  return gen_synthetic(11, spec);
}

}  // namespace

TEST_CASE("bicycle_step straight motion")
{
  const SimConfig cfg;
  const VehicleDims dims{4.5, 2.0, 2.8};
  EgoKinState s;
  s.velocity = 10.0;
  const auto out = bicycle_step(s, 0.0, 0.0, 0.1, dims, cfg);
  CHECK(out.pose.x == Catch::Approx(1.0).margin(1e-15));
  CHECK(out.pose.y == Catch::Approx(0.0).margin(1e-15));
  CHECK(out.pose.heading == 0.0);
  CHECK(out.velocity == 10.0);
}

TEST_CASE("bicycle_step zero velocity is a fixed point")
{
  const SimConfig cfg;
  const VehicleDims dims{4.5, 2.0, 2.8};
  EgoKinState s;
  s.pose = {3.0, -2.0, 0.7};
  const auto out = bicycle_step(s, 0.0, 0.5, 0.1, dims, cfg);
  CHECK(out.pose.x == s.pose.x);
  CHECK(out.pose.y == s.pose.y);
  CHECK(out.pose.heading == s.pose.heading);
  CHECK(out.velocity == 0.0);
}

TEST_CASE("bicycle_step clamps controls and forbids reverse by default")
{
  const SimConfig cfg;
  const VehicleDims dims{4.5, 2.0, 2.8};
  EgoKinState s;
  s.velocity = 1.0;
  const auto braked = bicycle_step(s, -100.0, 0.0, 1.0, dims, cfg);
  CHECK(braked.acceleration == -cfg.decel_limit);
  CHECK(braked.velocity == 0.0);
  const auto steered = bicycle_step(s, 0.0, 2.0, 0.1, dims, cfg);
  CHECK(steered.steering == cfg.steering_limit);
}

TEST_CASE("bicycle Euler matches an RK4 oracle over 1 s at dt=0.01")
{
  const SimConfig cfg;
  const VehicleDims dims{4.5, 2.0, 3.0};
  const testsupport::BicycleOde ode{3.0, 0.0, 0.1};
  EgoKinState s;
  s.velocity = 5.0;
  EgoKinState euler = s;
  for (int i = 0; i < 100; ++i) euler = bicycle_step(euler, ode.accel, ode.steering, 0.01, dims, cfg);
  const auto exact = testsupport::rk4_bicycle(s, ode, 1.0, 10000);
  CHECK(std::hypot(euler.pose.x - exact.pose.x, euler.pose.y - exact.pose.y) < 1e-3);
}

TEST_CASE("bicycle_step keeps heading wrapped")
{
  const SimConfig cfg;
  const VehicleDims dims{4.5, 2.0, 2.8};
  EgoKinState s;
  s.pose.heading = 3.1;
  s.velocity = 20.0;
  for (int i = 0; i < 200; ++i) {
    s = bicycle_step(s, 0.0, 0.6, 0.1, dims, cfg);
    CHECK(s.pose.heading > -std::numbers::pi);
    CHECK(s.pose.heading <= std::numbers::pi);
  }
}

TEST_CASE("lqr_track follows a straight constant-speed reference")
{
  const Scene scene = straight_scene(8.0);
  const SimConfig cfg = SimConfig::defaults_for(ScoringMode::navsim);
  const Rollout r = lqr_track(scene.expert, scene, cfg);
  REQUIRE(r.states.size() == 41);
  for (const auto & s : r.states) {
    CHECK(std::abs(s.pose.y) < 0.05);
    CHECK(std::abs(s.velocity - 8.0) < 0.1);
  }
}

TEST_CASE("lqr_track tracks feasible references to a tight terminal error")
{
  const Scene scene = straight_scene(6.0);
  const SimConfig cfg = SimConfig::defaults_for(ScoringMode::navsim);
  SplitMix64 rng(17);
  for (int it = 0; it < 10; ++it) {
    const auto ref = testsupport::feasible_reference(rng, scene, cfg);
    const Rollout r = lqr_track(ref.proposal, scene, cfg);
    const auto & last = r.states.back();
    CHECK(std::hypot(last.pose.x - ref.terminal.x, last.pose.y - ref.terminal.y) < 0.2);
    CHECK(std::abs(angle_diff(last.pose.heading, ref.terminal.heading)) < 0.05);
  }
}

TEST_CASE("lqr_track is deterministic")
{
  const Scene scene = straight_scene(5.0);
  const SimConfig cfg = SimConfig::defaults_for(ScoringMode::navsim);
  const Rollout a = lqr_track(scene.expert, scene, cfg);
  const Rollout b = lqr_track(scene.expert, scene, cfg);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    CHECK(a.states[i].pose.x == b.states[i].pose.x);
    CHECK(a.states[i].pose.y == b.states[i].pose.y);
    CHECK(a.states[i].pose.heading == b.states[i].pose.heading);
    CHECK(a.states[i].velocity == b.states[i].velocity);
  }
}

TEST_CASE("rollouts are rigid-frame equivariant")
{
  const Scene scene = straight_scene(7.0);
  const RigidTransform2D tf{0.9, {15.0, -4.0}};
  const Scene moved = testsupport::transform_scene(scene, tf);

  const SimConfig navsim = SimConfig::defaults_for(ScoringMode::navsim);
  const Rollout base = lqr_track(scene.expert, scene, navsim);
  const Rollout rot = lqr_track(testsupport::transform_poses(scene.expert, tf), moved, navsim);
  REQUIRE(base.states.size() == rot.states.size());
  for (std::size_t i = 0; i < base.states.size(); ++i) {
    const Pose2D expect = tf.apply(base.states[i].pose);
    CHECK(std::abs(rot.states[i].pose.x - expect.x) < 1e-9);
    CHECK(std::abs(rot.states[i].pose.y - expect.y) < 1e-9);
    CHECK(std::abs(angle_diff(rot.states[i].pose.heading, expect.heading)) < 1e-9);
    CHECK(std::abs(rot.states[i].velocity - base.states[i].velocity) < 1e-9);
  }

  const SimConfig bench = SimConfig::defaults_for(ScoringMode::bench2drive);
  std::vector<Pose2D> proposal(scene.expert.begin(), scene.expert.begin() + 6);
  const Rollout rbase = replay_track(proposal, scene, bench);
  const Rollout rrot = replay_track(testsupport::transform_poses(proposal, tf), moved, bench);
  for (std::size_t i = 0; i < rbase.states.size(); ++i) {
    const Pose2D expect = tf.apply(rbase.states[i].pose);
    CHECK(std::abs(rrot.states[i].pose.x - expect.x) < 1e-9);
    CHECK(std::abs(rrot.states[i].pose.y - expect.y) < 1e-9);
    CHECK(std::abs(rrot.states[i].velocity - rbase.states[i].velocity) < 1e-9);
  }
}

TEST_CASE("replay_track reproduces proposal poses exactly")
{
  const Scene scene = straight_scene(4.0);
  const SimConfig cfg = SimConfig::defaults_for(ScoringMode::bench2drive);
  std::vector<Pose2D> proposal{{2, 0.1, 0.05}, {4, 0.3, 0.1}, {6, 0.4, 0.0},
                               {8, 0.2, -0.1}, {10, 0.0, 0.0}, {12, 0.0, 0.0}};
  const Rollout r = replay_track(proposal, scene, cfg);
  REQUIRE(r.states.size() == proposal.size() + 1);
  CHECK(r.states[0].pose.x == scene.ego_start.pose.x);
  for (std::size_t i = 0; i < proposal.size(); ++i) {
    CHECK(r.states[i + 1].pose.x == proposal[i].x);
    CHECK(r.states[i + 1].pose.y == proposal[i].y);
    CHECK(r.states[i + 1].pose.heading == proposal[i].heading);
  }
}

TEST_CASE("replay_track of constant velocity has zero derived acceleration")
{
  const Scene scene = straight_scene(4.0);
  const SimConfig cfg = SimConfig::defaults_for(ScoringMode::bench2drive);
  std::vector<Pose2D> proposal;
  for (int i = 1; i <= 6; ++i) proposal.push_back({4.0 * 0.5 * i, 0.0, 0.0});
  const Rollout r = replay_track(proposal, scene, cfg);
  for (const auto & s : r.states) {
    CHECK(std::abs(s.velocity - 4.0) < 1e-9);
    CHECK(std::abs(s.acceleration) < 1e-9);
  }
}

TEST_CASE("replay_track velocity step matches the hand finite-difference stencil")
{
  const Scene scene = straight_scene(4.0);
  const SimConfig cfg = SimConfig::defaults_for(ScoringMode::bench2drive);
  const double dt = cfg.dt();
  // Positions advance at 2 m/s for three steps, then 6 m/s.
  std::vector<Pose2D> proposal;
  double x = 0.0;
  for (int i = 1; i <= 6; ++i) {
    x += (i <= 3 ? 2.0 : 6.0) * dt;
    proposal.push_back({x, 0.0, 0.0});
  }
  const Rollout r = replay_track(proposal, scene, cfg);

  // Hand recomputation with the same second-order stencils.
  std::vector<double> px{scene.ego_start.pose.x};
  for (const auto & p : proposal) px.push_back(p.x);
  const std::size_t n = px.size();
  std::vector<double> v(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) v[i] = (-3 * px[0] + 4 * px[1] - px[2]) / (2 * dt);
    else if (i == n - 1) v[i] = (3 * px[n - 1] - 4 * px[n - 2] + px[n - 3]) / (2 * dt);
    else v[i] = (px[i + 1] - px[i - 1]) / (2 * dt);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) a[i] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * dt);
    else if (i == n - 1) a[i] = (3 * v[n - 1] - 4 * v[n - 2] + v[n - 3]) / (2 * dt);
    else a[i] = (v[i + 1] - v[i - 1]) / (2 * dt);
  }
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(std::abs(r.states[i].velocity - std::abs(v[i])) < 1e-9);
    CHECK(std::abs(r.states[i].acceleration - a[i]) < 1e-9);
    peak = std::max(peak, std::abs(a[i]));
  }
  // The interior spike over the step is (6 - 2) / (2 dt).
  CHECK(peak >= (6.0 - 2.0) / (2.0 * dt) - 1e-9);
}

TEST_CASE("kinematic_profile on uniform circular motion")
{
  // v = 10, radius = 50: lateral acceleration 2.0, yaw rate 0.2.
  const auto r = testsupport::yaw_rate_rollout(10.0, [](double) { return 0.2; }, 4.0, 0.01);
  const auto p = kinematic_profile(r);
  for (std::size_t i = 0; i < p.speed.size(); ++i) {
    CHECK(std::abs(p.lat_acc[i] - 2.0) < 1e-3);
    CHECK(std::abs(p.yaw_rate[i] - 0.2) < 1e-6);
    // Interior only: the one-sided endpoint stencils feed the second
    // derivative an O(dt) error on curved paths.
    if (i >= 2 && i + 2 < p.speed.size()) CHECK(std::abs(p.lon_acc[i]) < 1e-3);
  }
}

TEST_CASE("kinematic_profile of a straight constant-velocity rollout is zero")
{
  const auto r = testsupport::straight_rollout(5.0);
  const auto p = kinematic_profile(r);
  for (std::size_t i = 0; i < p.speed.size(); ++i) {
    CHECK(std::abs(p.speed[i] - 5.0) < 1e-9);
    CHECK(std::abs(p.lon_acc[i]) < 1e-9);
    CHECK(std::abs(p.lat_acc[i]) < 1e-9);
    CHECK(std::abs(p.abs_jerk[i]) < 1e-9);
    CHECK(std::abs(p.lon_jerk[i]) < 1e-9);
    CHECK(std::abs(p.yaw_rate[i]) < 1e-9);
    CHECK(std::abs(p.yaw_acc[i]) < 1e-9);
  }
}

TEST_CASE("kinematic_profile recovers a quadratic acceleration exactly")
{
  Rollout r;
  r.dt = 0.1;
  for (int i = 0; i <= 40; ++i) {
    const double t = 0.1 * i;
    EgoKinState s;
    s.pose = {0.5 * 2.4 * t * t, 0.0, 0.0};
    s.velocity = 2.4 * t;
    r.states.push_back(s);
  }
  const auto p = kinematic_profile(r);
  for (std::size_t i = 0; i < p.lon_acc.size(); ++i) {
    CHECK(std::abs(p.lon_acc[i] - 2.4) < 1e-9);
  }
  CHECK_THROWS_AS(kinematic_profile(Rollout{0.1, {{}, {}}}), ValidationError);
}

TEST_CASE("sim_config_from_json defaults and overrides")
{
  const auto navsim = sim_config_from_json(nlohmann::json::object());
  CHECK(navsim.sim_hz == 10.0);
  CHECK(navsim.horizon == 4.0);

  const auto bench = sim_config_from_json({{"mode", "bench2drive"}});
  CHECK(bench.sim_hz == 2.0);
  CHECK(bench.horizon == 3.0);

  const auto custom = sim_config_from_json({{"sim_hz", 20.0}, {"k_speed", 3.5}});
  CHECK(custom.sim_hz == 20.0);
  CHECK(custom.k_speed == 3.5);

  CHECK_THROWS_AS(sim_config_from_json({{"sim_hz", -1.0}}), ValidationError);
}
