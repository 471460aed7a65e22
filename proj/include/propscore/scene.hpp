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
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "propscore/core.hpp"
#include "propscore/geometry.hpp"

namespace propscore
{

enum class AgentCategory { vehicle, pedestrian, bicycle, static_object };

inline std::string to_string(AgentCategory c)
{
  switch (c) {
    case AgentCategory::vehicle: return "vehicle";
    case AgentCategory::pedestrian: return "pedestrian";
    case AgentCategory::bicycle: return "bicycle";
    case AgentCategory::static_object: return "static_object";
  }
  return "unknown";
}

inline AgentCategory agent_category_from_string(const std::string & s)
{
  if (s == "vehicle") return AgentCategory::vehicle;
  if (s == "pedestrian") return AgentCategory::pedestrian;
  if (s == "bicycle") return AgentCategory::bicycle;
  if (s == "static_object") return AgentCategory::static_object;
  throw SchemaError("unknown agent category '" + s + "'");
}

/// A road user is anything that moves; collisions with them gate NC to 0.
inline bool is_road_user(AgentCategory c) { return c != AgentCategory::static_object; }

enum class ScoringMode { navsim, bench2drive };

inline std::string to_string(ScoringMode m)
{
  return m == ScoringMode::navsim ? "navsim" : "bench2drive";
}

inline ScoringMode scoring_mode_from_string(const std::string & s)
{
  if (s == "navsim") return ScoringMode::navsim;
  if (s == "bench2drive") return ScoringMode::bench2drive;
  throw SchemaError("unknown mode '" + s + "'");
}

struct AgentState
{
  double t = 0.0;
  Pose2D pose{};
  double velocity = 0.0;
  bool valid = true;
};

struct AgentTrack
{
  std::string id;
  AgentCategory category = AgentCategory::vehicle;
  VehicleDims dims{};  // wheelbase unused for non-vehicles
  std::vector<AgentState> states;

  void validate() const
  {
    dims.validate("agent '" + id + "'");
    if (states.empty()) {
      throw ValidationError("agent '" + id + "': no states");
    }
    bool any_valid = false;
    for (std::size_t i = 0; i < states.size(); ++i) {
      check_finite_pose(states[i].pose, "agent '" + id + "'");
      if (i > 0 && !(states[i].t > states[i - 1].t)) {
        throw ValidationError("agent '" + id + "': states not sorted strictly by t");
      }
      any_valid = any_valid || states[i].valid;
    }
    if (!any_valid) {
      throw ValidationError("agent '" + id + "': no valid state");
    }
  }
};

/// Log-replay lookup: linear position/velocity, shortest-arc heading.
/// Returns nullopt outside the track's time span. The result is flagged valid
/// only when both bracketing samples are valid.
inline std::optional<AgentState> agent_state_at(const AgentTrack & track, double t)
{
  const auto & st = track.states;
  if (st.empty() || t < st.front().t || t > st.back().t) return std::nullopt;
  // Single-state tracks (static objects) hold their state over [t0, t0].
  auto it = std::lower_bound(
    st.begin(), st.end(), t, [](const AgentState & s, double tt) { return s.t < tt; });
  if (it != st.end() && it->t == t) return *it;
  const AgentState & hi = *it;
  const AgentState & lo = *(it - 1);
  const double u = (t - lo.t) / (hi.t - lo.t);
  AgentState out;
  out.t = t;
  out.pose.x = lo.pose.x + u * (hi.pose.x - lo.pose.x);
  out.pose.y = lo.pose.y + u * (hi.pose.y - lo.pose.y);
  out.pose.heading = lerp_angle(lo.pose.heading, hi.pose.heading, u);
  out.velocity = lo.velocity + u * (hi.velocity - lo.velocity);
  out.valid = lo.valid && hi.valid;
  return out;
}

/// Densifies a timestamped pose sequence to 1/hz spacing over the input span.
/// Positions interpolate linearly, headings by shortest arc.
inline std::vector<std::pair<double, Pose2D>> resample_trajectory(
  const std::vector<std::pair<double, Pose2D>> & poses, double hz)
{
  if (poses.size() < 2) {
    throw ValidationError("resample_trajectory: needs at least 2 samples");
  }
  for (std::size_t i = 1; i < poses.size(); ++i) {
    if (!(poses[i].first > poses[i - 1].first)) {
      throw ValidationError("resample_trajectory: timestamps not strictly increasing");
    }
  }
  const double dt = 1.0 / hz;
  const double t0 = poses.front().first;
  const double t1 = poses.back().first;
  const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt + 1e-9)) + 1;
  std::vector<std::pair<double, Pose2D>> out;
  out.reserve(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::min(t0 + static_cast<double>(i) * dt, t1);
    while (seg + 2 < poses.size() && poses[seg + 1].first < t) ++seg;
    const auto & [ta, a] = poses[seg];
    const auto & [tb, b] = poses[seg + 1];
    const double u = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
    Pose2D p;
    p.x = a.x + u * (b.x - a.x);
    p.y = a.y + u * (b.y - a.y);
    p.heading = lerp_angle(a.heading, b.heading, u);
    out.emplace_back(t, p);
  }
  return out;
}

struct Route
{
  std::vector<Vec2> centerline;  // >= 2 points
  double half_width = 0.0;
  double progress_upper_bound = 0.0;

  void validate() const
  {
    if (centerline.size() < 2) {
      throw ValidationError("route: centerline needs at least 2 points");
    }
    for (std::size_t i = 1; i < centerline.size(); ++i) {
      if ((centerline[i] - centerline[i - 1]).norm() == 0.0) {
        throw ValidationError("route: consecutive centerline points coincide");
      }
    }
    if (!(half_width > 0.0)) throw ValidationError("route: half_width must be positive");
    if (!(progress_upper_bound >= 0.0)) {
      throw ValidationError("route: progress_upper_bound must be nonnegative");
    }
  }

  Polyline polyline() const { return Polyline(centerline); }
};

struct CameraModel
{
  std::string view_id;
  std::array<double, 9> intrinsics{};   // row-major K
  std::array<double, 9> rotation{};     // row-major world->camera
  std::array<double, 3> translation{};  // camera = R * world + t
  int image_width = 0;
  int image_height = 0;

  void validate() const
  {
    const auto & K = intrinsics;
    const double det = K[0] * (K[4] * K[8] - K[5] * K[7]) - K[1] * (K[3] * K[8] - K[5] * K[6]) +
                       K[2] * (K[3] * K[7] - K[4] * K[6]);
    if (std::abs(det) < 1e-12) {
      throw ValidationError("camera '" + view_id + "': intrinsics not invertible");
    }
    // R^T R = I within 1e-9
    const auto & R = rotation;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += R[k * 3 + i] * R[k * 3 + j];
        const double expect = i == j ? 1.0 : 0.0;
        if (std::abs(dot - expect) > 1e-9) {
          throw ValidationError("camera '" + view_id + "': rotation not orthonormal");
        }
      }
    }
    if (image_width <= 0 || image_height <= 0) {
      throw ValidationError("camera '" + view_id + "': nonpositive image size");
    }
  }
};

struct EgoStart
{
  Pose2D pose{};
  double velocity = 0.0;
  double acceleration = 0.0;
};

/// Immutable after construction; safe to share across concurrent evaluators.
/// All content lives in one local metric frame with the ego at the origin
/// heading +x at t = 0.
struct Scene
{
  ScoringMode mode = ScoringMode::navsim;
  EgoStart ego_start{};
  VehicleDims ego_dims{};
  std::vector<AgentTrack> agents;
  std::vector<std::vector<Vec2>> drivable_area;
  Route route{};
  std::vector<CameraModel> cameras;
  std::vector<Pose2D> expert;  // optional, empty when absent

  void validate() const
  {
    check_finite_pose(ego_start.pose, "ego");
    ego_dims.validate("ego");
    for (const auto & a : agents) a.validate();
    route.validate();
    for (const auto & cam : cameras) cam.validate();
    if (drivable_area.empty()) {
      throw ValidationError("scene: drivable_area is empty");
    }
    for (std::size_t pi = 0; pi < drivable_area.size(); ++pi) {
      const auto & poly = drivable_area[pi];
      if (poly.size() < 3) {
        throw ValidationError("scene: drivable polygon " + std::to_string(pi) + " degenerate");
      }
      if (polygon_self_intersects(poly)) {
        throw ValidationError(
          "scene: drivable polygon " + std::to_string(pi) + " self-intersects");
      }
    }
    bool inside = false;
    for (const auto & poly : drivable_area) {
      if (point_in_polygon(ego_start.pose.position(), poly)) inside = true;
    }
    if (!inside) {
      throw ValidationError("scene: ego start pose outside every drivable polygon");
    }
    for (const auto & p : expert) check_finite_pose(p, "expert");
  }

  bool on_drivable(const Vec2 & p) const
  {
    for (const auto & poly : drivable_area) {
      if (point_in_polygon(p, poly)) return true;
    }
    return false;
  }

private:
  static bool segments_cross(const Vec2 & a, const Vec2 & b, const Vec2 & c, const Vec2 & d)
  {
    const auto side = [](const Vec2 & p, const Vec2 & q, const Vec2 & r) {
      const double v = (q - p).cross(r - p);
      return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
    };
    const int s1 = side(a, b, c), s2 = side(a, b, d);
    const int s3 = side(c, d, a), s4 = side(c, d, b);
    return s1 * s2 < 0 && s3 * s4 < 0;
  }

  static bool polygon_self_intersects(const std::vector<Vec2> & poly)
  {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        // Skip adjacent edges (they share a vertex).
        if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
        if (segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n])) return true;
      }
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// JSON serialization. Schema documented in README; unknown keys are rejected.

namespace detail
{

inline void require_keys(
  const nlohmann::json & j, const std::vector<std::string> & required,
  const std::vector<std::string> & optional, const std::string & where)
{
  if (!j.is_object()) throw SchemaError(where + ": expected object");
  for (const auto & k : required) {
    if (!j.contains(k)) throw SchemaError(where + ": missing field '" + k + "'");
  }
  for (const auto & [k, v] : j.items()) {
    const bool known = std::find(required.begin(), required.end(), k) != required.end() ||
                       std::find(optional.begin(), optional.end(), k) != optional.end();
    if (!known) throw SchemaError(where + ": unknown key '" + k + "'");
  }
}

inline double num(const nlohmann::json & j, const std::string & where)
{
  if (!j.is_number()) throw SchemaError(where + ": expected number");
  return j.get<double>();
}

template <std::size_t N>
std::array<double, N> num_array(const nlohmann::json & j, const std::string & where)
{
  if (!j.is_array() || j.size() != N) {
    throw SchemaError(where + ": expected array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = num(j[i], where);
  return out;
}

inline std::vector<Vec2> point_list(const nlohmann::json & j, const std::string & where)
{
  if (!j.is_array()) throw SchemaError(where + ": expected array of points");
  std::vector<Vec2> out;
  out.reserve(j.size());
  for (const auto & p : j) {
    const auto a = num_array<2>(p, where);
    out.push_back({a[0], a[1]});
  }
  return out;
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene & scene)
{
  using nlohmann::json;
  json j;
  j["mode"] = to_string(scene.mode);
  j["ego"] = {
    {"pose", {scene.ego_start.pose.x, scene.ego_start.pose.y, scene.ego_start.pose.heading}},
    {"velocity", scene.ego_start.velocity},
    {"acceleration", scene.ego_start.acceleration},
    {"dims",
     {{"length", scene.ego_dims.length},
      {"width", scene.ego_dims.width},
      {"wheelbase", scene.ego_dims.wheelbase}}}};
  j["agents"] = json::array();
  for (const auto & a : scene.agents) {
    json states = json::array();
    for (const auto & s : a.states) {
      states.push_back(
        {s.t, s.pose.x, s.pose.y, s.pose.heading, s.velocity, s.valid});
    }
    j["agents"].push_back(
      {{"id", a.id},
       {"category", to_string(a.category)},
       {"dims",
        {{"length", a.dims.length}, {"width", a.dims.width}, {"wheelbase", a.dims.wheelbase}}},
       {"states", std::move(states)}});
  }
  j["drivable_area"] = json::array();
  for (const auto & poly : scene.drivable_area) {
    json jp = json::array();
    for (const auto & p : poly) jp.push_back({p.x, p.y});
    j["drivable_area"].push_back(std::move(jp));
  }
  json centerline = json::array();
  for (const auto & p : scene.route.centerline) centerline.push_back({p.x, p.y});
  j["route"] = {
    {"centerline", std::move(centerline)},
    {"half_width", scene.route.half_width},
    {"progress_upper_bound", scene.route.progress_upper_bound}};
  j["cameras"] = json::array();
  for (const auto & cam : scene.cameras) {
    j["cameras"].push_back(
      {{"view_id", cam.view_id},
       {"K", cam.intrinsics},
       {"R", cam.rotation},
       {"t", cam.translation},
       {"image_size", {cam.image_width, cam.image_height}}});
  }
  j["expert"] = json::array();
  for (const auto & p : scene.expert) j["expert"].push_back({p.x, p.y, p.heading});
  return j;
}

inline Scene scene_from_json(const nlohmann::json & j)
{
  using detail::num;
  using detail::num_array;
  using detail::require_keys;
  Scene scene;
  require_keys(
    j, {"mode", "ego", "agents", "drivable_area", "route"}, {"cameras", "expert"}, "scene");
  scene.mode = scoring_mode_from_string(j.at("mode").get<std::string>());

  const auto & ego = j.at("ego");
  require_keys(ego, {"pose", "velocity", "acceleration", "dims"}, {}, "ego");
  const auto pose = num_array<3>(ego.at("pose"), "ego.pose");
  scene.ego_start.pose = {pose[0], pose[1], wrap_angle(pose[2])};
  scene.ego_start.velocity = num(ego.at("velocity"), "ego.velocity");
  scene.ego_start.acceleration = num(ego.at("acceleration"), "ego.acceleration");
  const auto & edims = ego.at("dims");
  require_keys(edims, {"length", "width", "wheelbase"}, {}, "ego.dims");
  scene.ego_dims = {
    num(edims.at("length"), "ego.dims"), num(edims.at("width"), "ego.dims"),
    num(edims.at("wheelbase"), "ego.dims")};

  for (const auto & ja : j.at("agents")) {
    require_keys(ja, {"id", "category", "dims", "states"}, {}, "agent");
    AgentTrack track;
    track.id = ja.at("id").get<std::string>();
    track.category = agent_category_from_string(ja.at("category").get<std::string>());
    const auto & adims = ja.at("dims");
    require_keys(adims, {"length", "width", "wheelbase"}, {}, "agent.dims");
    track.dims = {
      num(adims.at("length"), "agent.dims"), num(adims.at("width"), "agent.dims"),
      num(adims.at("wheelbase"), "agent.dims")};
    for (const auto & js : ja.at("states")) {
      if (!js.is_array() || js.size() != 6) {
        throw SchemaError("agent '" + track.id + "': state must be [t,x,y,heading,v,valid]");
      }
      AgentState s;
      s.t = num(js[0], "agent state t");
      s.pose = {num(js[1], "agent x"), num(js[2], "agent y"), wrap_angle(num(js[3], "agent h"))};
      s.velocity = num(js[4], "agent v");
      if (!js[5].is_boolean()) throw SchemaError("agent '" + track.id + "': valid must be bool");
      s.valid = js[5].get<bool>();
      track.states.push_back(s);
    }
    scene.agents.push_back(std::move(track));
  }

  for (const auto & jp : j.at("drivable_area")) {
    scene.drivable_area.push_back(detail::point_list(jp, "drivable_area"));
  }

  const auto & jr = j.at("route");
  require_keys(jr, {"centerline", "half_width", "progress_upper_bound"}, {}, "route");
  scene.route.centerline = detail::point_list(jr.at("centerline"), "route.centerline");
  scene.route.half_width = num(jr.at("half_width"), "route.half_width");
  scene.route.progress_upper_bound =
    num(jr.at("progress_upper_bound"), "route.progress_upper_bound");

  if (j.contains("cameras")) {
    for (const auto & jc : j.at("cameras")) {
      require_keys(jc, {"view_id", "K", "R", "t", "image_size"}, {}, "camera");
      CameraModel cam;
      cam.view_id = jc.at("view_id").get<std::string>();
      cam.intrinsics = num_array<9>(jc.at("K"), "camera.K");
      cam.rotation = num_array<9>(jc.at("R"), "camera.R");
      cam.translation = num_array<3>(jc.at("t"), "camera.t");
      const auto sz = num_array<2>(jc.at("image_size"), "camera.image_size");
      cam.image_width = static_cast<int>(sz[0]);
      cam.image_height = static_cast<int>(sz[1]);
      scene.cameras.push_back(std::move(cam));
    }
  }

  if (j.contains("expert")) {
    for (const auto & jp : j.at("expert")) {
      const auto a = num_array<3>(jp, "expert pose");
      scene.expert.push_back({a[0], a[1], wrap_angle(a[2])});
    }
  }

  scene.validate();
  return scene;
}

inline std::string serialize_scene(const Scene & scene) { return scene_to_json(scene).dump(2); }

inline Scene load_scene_from_string(const std::string & text)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error & e) {
    throw SchemaError(std::string("scene parse error: ") + e.what());
  }
  return scene_from_json(j);
}

inline Scene load_scene(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open scene file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return load_scene_from_string(ss.str());
  } catch (const SchemaError & e) {
    throw SchemaError(path + ": " + e.what());
  } catch (const ValidationError & e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace propscore
