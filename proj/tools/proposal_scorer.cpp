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

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "propscore/bench.hpp"
#include "propscore/labels.hpp"
#include "propscore/losses.hpp"
#include "propscore/metrics.hpp"
#include "propscore/scene.hpp"
#include "propscore/simulator.hpp"
#include "propscore/stats.hpp"
#include "propscore/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

// Fixed-format float printing so CSV bytes are identical for any --jobs.
std::string fmt(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void parallel_for(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)> & fn)
{
  jobs = std::max<std::size_t>(1, std::min(jobs, n_tasks == 0 ? 1 : n_tasks));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_tasks) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto & t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::vector<propscore::Pose2D>> load_proposals(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw propscore::SchemaError("cannot open proposal file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error & e) {
    throw propscore::SchemaError(path + ": parse error: " + e.what());
  }
  if (!j.is_array() || j.empty()) {
    throw propscore::SchemaError(path + ": expected non-empty array of proposals");
  }
  std::vector<std::vector<propscore::Pose2D>> out;
  for (const auto & jp : j) {
    std::vector<propscore::Pose2D> proposal;
    for (const auto & js : jp) {
      if (!js.is_array() || js.size() != 3) {
        throw propscore::SchemaError(path + ": proposal pose must be [x, y, heading]");
      }
      proposal.push_back(
        {js[0].get<double>(), js[1].get<double>(),
         propscore::wrap_angle(js[2].get<double>())});
    }
    out.push_back(std::move(proposal));
  }
  return out;
}

struct Manifest
{
  std::vector<std::string> scene_paths;
  std::vector<std::string> proposal_paths;  // empty: expert-as-proposal
  std::string config_path;
  std::string mode = "navsim";
  std::size_t jobs = 1;
  std::string out_dir = ".";
};

propscore::SimConfig resolve_config(const Manifest & m)
{
  std::string path = m.config_path;
  if (path.empty()) {
    if (const char * env = std::getenv("PROPOSAL_SCORER_CONFIG")) path = env;
  }
  json j = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw propscore::SchemaError("cannot open config file '" + path + "'");
    try {
      j = json::parse(in);
    } catch (const json::parse_error & e) {
      throw propscore::SchemaError(path + ": parse error: " + e.what());
    }
  }
  if (!j.contains("mode")) j["mode"] = m.mode;
  return propscore::sim_config_from_json(j);
}

propscore::ComfortThresholds resolve_thresholds(const Manifest & m)
{
  std::string path = m.config_path;
  if (path.empty()) {
    if (const char * env = std::getenv("PROPOSAL_SCORER_CONFIG")) path = env;
  }
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw propscore::SchemaError("cannot open config file '" + path + "'");
  json j = json::parse(in);
  if (j.contains("comfort_thresholds")) {
    return propscore::comfort_thresholds_from_json(j.at("comfort_thresholds"));
  }
  return {};
}

struct LoadedScene
{
  std::string path;
  propscore::Scene scene;
  std::vector<std::vector<propscore::Pose2D>> proposals;
};

std::vector<LoadedScene> load_inputs(const Manifest & m)
{
  if (m.scene_paths.empty()) throw propscore::SchemaError("no scene files given");
  if (!m.proposal_paths.empty() && m.proposal_paths.size() != m.scene_paths.size()) {
    throw propscore::SchemaError("proposal file count must match scene file count");
  }
  std::vector<LoadedScene> out;
  for (std::size_t i = 0; i < m.scene_paths.size(); ++i) {
    LoadedScene ls;
    ls.path = m.scene_paths[i];
    ls.scene = propscore::load_scene(ls.path);
    if (!m.proposal_paths.empty()) {
      ls.proposals = load_proposals(m.proposal_paths[i]);
    } else {
      if (ls.scene.expert.empty()) {
        throw propscore::SchemaError(ls.path + ": no proposals given and scene has no expert");
      }
      ls.proposals = {ls.scene.expert};
    }
    out.push_back(std::move(ls));
  }
  return out;
}

int cmd_score(const Manifest & m)
{
  const auto cfg = resolve_config(m);
  const auto thresholds = resolve_thresholds(m);
  const auto scenes = load_inputs(m);

  struct Task
  {
    std::size_t scene_idx;
    std::size_t proposal_idx;
  };
  std::vector<Task> tasks;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t p = 0; p < scenes[s].proposals.size(); ++p) tasks.push_back({s, p});
  }
  std::vector<propscore::ScoreCard> cards(tasks.size());
  parallel_for(tasks.size(), m.jobs, [&](std::size_t i) {
    const auto & t = tasks[i];
    cards[i] = propscore::evaluate_proposal(
                 scenes[t.scene_idx].proposals[t.proposal_idx], scenes[t.scene_idx].scene, cfg,
                 thresholds)
                 .card;
  });

  fs::create_directories(m.out_dir);
  std::ofstream csv(fs::path(m.out_dir) / "scores.csv", std::ios::binary);
  csv << "scene,proposal_index,nc,dac,ttc,comfort,ep,ep_discarded,pdms,"
         "first_at_fault_id,first_ttc_id\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto & t = tasks[i];
    const auto & c = cards[i];
    csv << scenes[t.scene_idx].path << ',' << t.proposal_idx << ',' << fmt(c.sub.nc) << ','
        << fmt(c.sub.dac) << ',' << fmt(c.sub.ttc) << ',' << fmt(c.sub.comfort) << ','
        << fmt(c.sub.ep) << ',' << (c.sub.ep_discarded ? 1 : 0) << ',' << fmt(c.pdms) << ','
        << (c.first_at_fault_agent ? c.first_at_fault_agent->agent_id : "") << ','
        << (c.first_ttc_agent ? c.first_ttc_agent->agent_id : "") << '\n';
  }
  csv.close();

  json summary;
  summary["scenes"] = json::array();
  std::size_t cursor = 0;
  for (const auto & s : scenes) {
    std::size_t best = 0;
    double best_pdms = -1.0;
    for (std::size_t p = 0; p < s.proposals.size(); ++p) {
      const double v = cards[cursor + p].pdms;
      if (v > best_pdms) {
        best_pdms = v;
        best = p;
      }
    }
    summary["scenes"].push_back(
      {{"scene", s.path}, {"best_proposal", best}, {"best_pdms", best_pdms}});
    cursor += s.proposals.size();
  }
  std::ofstream js(fs::path(m.out_dir) / "summary.json", std::ios::binary);
  js << summary.dump(2) << '\n';
  return 0;
}

int cmd_labels(const Manifest & m, bool with_loss_check)
{
  const auto cfg = resolve_config(m);
  const auto thresholds = resolve_thresholds(m);
  const auto scenes = load_inputs(m);
  fs::create_directories(m.out_dir);

  json out;
  out["scenes"] = json::array();
  for (const auto & s : scenes) {
    std::vector<propscore::Rollout> rollouts;
    std::vector<propscore::ScoreCard> cards;
    for (const auto & p : s.proposals) {
      auto ev = propscore::evaluate_proposal(p, s.scene, cfg, thresholds);
      rollouts.push_back(std::move(ev.rollout));
      cards.push_back(std::move(ev.card));
    }
    const auto mapping = propscore::mapping_labels(s.proposals, s.scene, rollouts);
    const auto prediction = propscore::prediction_targets(s.proposals, s.scene, cards);

    json jm = json::array();
    for (std::size_t n = 0; n < mapping.num_proposals; ++n) {
      json per_step = json::array();
      for (std::size_t t = 0; t < mapping.num_steps; ++t) {
        per_step.push_back({mapping.at(n, t)[0], mapping.at(n, t)[1]});
      }
      jm.push_back(std::move(per_step));
    }
    json jv = json::array();
    json jc = json::array();
    for (std::size_t n = 0; n < prediction.num_proposals; ++n) {
      json vn = json::array(), cn = json::array();
      for (std::size_t t = 0; t < prediction.num_steps; ++t) {
        json vt = json::array(), ct = json::array();
        for (std::size_t slot = 0; slot < 2; ++slot) {
          vt.push_back(
            static_cast<bool>(prediction.validity[prediction.validity_index(n, t, slot)]));
          json corners = json::array();
          for (std::size_t corner = 0; corner < 4; ++corner) {
            corners.push_back(
              {prediction.corners[prediction.corner_index(n, t, slot, corner, 0)],
               prediction.corners[prediction.corner_index(n, t, slot, corner, 1)]});
          }
          ct.push_back(std::move(corners));
        }
        vn.push_back(std::move(vt));
        cn.push_back(std::move(ct));
      }
      jv.push_back(std::move(vn));
      jc.push_back(std::move(cn));
    }
    json entry = {
      {"scene", s.path},
      {"mapping", std::move(jm)},
      {"prediction", {{"validity", std::move(jv)}, {"corners", std::move(jc)}}}};

    if (with_loss_check) {
      // Perfect predictions reproduce the labels; the resulting losses must
      // be ~0 up to the BCE clamp.
      std::vector<double> m_pred;
      for (const auto & v : mapping.values) {
        m_pred.push_back(v[0] ? 1.0 : 0.0);
        m_pred.push_back(v[1] ? 1.0 : 0.0);
      }
      const double ml = propscore::map_loss(m_pred, mapping);
      std::vector<double> v_pred;
      for (const bool v : prediction.validity) v_pred.push_back(v ? 1.0 : 0.0);
      const double pl =
        propscore::pred_loss(prediction.corners, v_pred, prediction, 0.1);
      entry["loss_check"] = {{"map_loss", ml}, {"pred_loss", pl}};
      if (ml > 1e-6 || pl > 1e-6) {
        throw propscore::ValidationError("loss check failed: losses not ~0");
      }
    }
    out["scenes"].push_back(std::move(entry));
  }
  std::ofstream js(fs::path(m.out_dir) / "labels.json", std::ios::binary);
  js << out.dump(2) << '\n';
  return 0;
}

int cmd_correlate(const std::vector<std::string> & csv_paths, const std::string & out_dir)
{
  // Each row across the input CSVs is one run; numeric columns are
  // correlated pairwise.
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;  // per column
  bool first_file = true;
  std::size_t n_rows = 0;
  for (const auto & path : csv_paths) {
    std::ifstream in(path);
    if (!in) throw propscore::SchemaError("cannot open CSV '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw propscore::SchemaError(path + ": empty CSV");
    std::vector<std::string> header;
    {
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (first_file) {
      columns = header;
      data.assign(columns.size(), {});
      first_file = false;
    } else if (header != columns) {
      throw propscore::SchemaError(path + ": CSV header mismatch");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      std::size_t col = 0;
      while (std::getline(ss, cell, ',')) {
        if (col >= columns.size()) throw propscore::SchemaError(path + ": ragged CSV row");
        try {
          data[col].push_back(std::stod(cell));
        } catch (...) {
          data[col].push_back(std::numeric_limits<double>::quiet_NaN());
        }
        ++col;
      }
      while (col < columns.size()) data[col++].push_back(std::numeric_limits<double>::quiet_NaN());
      ++n_rows;
    }
  }
  if (n_rows < 3) throw propscore::SchemaError("correlate: need at least 3 rows");

  // Keep columns where every cell is numeric.
  std::vector<std::size_t> numeric;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    bool ok = true;
    for (double v : data[c]) {
      if (std::isnan(v)) {
        ok = false;
        break;
      }
    }
    if (ok) numeric.push_back(c);
  }
  if (numeric.size() < 2) throw propscore::SchemaError("correlate: need at least 2 numeric columns");

  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "correlation.csv", std::ios::binary);
  csv << "metric";
  for (const auto c : numeric) csv << ',' << columns[c];
  csv << '\n';
  for (const auto r : numeric) {
    csv << columns[r];
    for (const auto c : numeric) {
      const auto rho = propscore::pearson(data[r], data[c]);
      csv << ',';
      if (rho) csv << fmt(*rho);  // constant columns stay empty (undefined)
    }
    csv << '\n';
  }
  return 0;
}

int cmd_bench(
  std::vector<std::size_t> proposal_sweep, std::vector<std::size_t> grid_sweep, int reps,
  const std::string & out_dir)
{
  if (reps < 1) throw propscore::SchemaError("bench: reps must be >= 1");
  if (proposal_sweep.empty()) proposal_sweep = {16, 32, 64, 128, 256};
  if (grid_sweep.empty()) grid_sweep = {32, 64, 128};
  const auto rows =
    propscore::bench_attention(proposal_sweep, grid_sweep, static_cast<std::size_t>(reps));
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "bench.csv", std::ios::binary);
  csv << propscore::bench_rows_to_csv(rows);
  return 0;
}

int cmd_gen(std::uint64_t seed, int count, const propscore::SyntheticSpec & spec,
            const std::string & out_dir)
{
  fs::create_directories(out_dir);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const propscore::Scene scene = propscore::gen_synthetic(s, spec);
    const fs::path path = fs::path(out_dir) / ("scene_" + std::to_string(s) + ".json");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw propscore::SchemaError("cannot write '" + path.string() + "'");
    out << propscore::serialize_scene(scene) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Closed-loop trajectory-proposal scoring engine"};
  app.require_subcommand(1);

  Manifest manifest;
  bool with_loss_check = false;

  auto add_manifest_flags = [&](CLI::App * cmd) {
    cmd->add_option("--scenes", manifest.scene_paths, "Scene JSON files")->required();
    cmd->add_option("--proposals", manifest.proposal_paths,
                    "Proposal JSON files (one per scene; default: scene expert)");
    cmd->add_option("--config", manifest.config_path, "Simulator/threshold config JSON");
    cmd->add_option("--mode", manifest.mode, "navsim|bench2drive")
      ->check(CLI::IsMember({"navsim", "bench2drive"}));
    cmd->add_option("--jobs", manifest.jobs, "Worker count")->check(CLI::PositiveNumber);
    cmd->add_option("--out", manifest.out_dir, "Output directory");
  };

  auto * score = app.add_subcommand("score", "Score proposals against scenes");
  add_manifest_flags(score);

  auto * labels = app.add_subcommand("labels", "Export mapping/prediction labels");
  add_manifest_flags(labels);
  labels->add_flag("--with-loss-check", with_loss_check,
                   "Assert perfect-prediction losses are ~0");

  auto * correlate = app.add_subcommand("correlate", "Pearson matrix over metric CSVs");
  std::vector<std::string> csv_paths;
  std::string corr_out = ".";
  correlate->add_option("csvs", csv_paths, "Metric CSV files")->required();
  correlate->add_option("--out", corr_out, "Output directory");

  auto * bench = app.add_subcommand("bench", "Attention complexity benchmark");
  std::vector<std::size_t> proposal_sweep, grid_sweep;
  int reps = 20;
  std::string bench_out = ".";
  bench->add_option("--proposal-sweep", proposal_sweep, "Proposal counts");
  bench->add_option("--grid-sweep", grid_sweep, "Dense-grid side lengths");
  bench->add_option("--reps", reps, "Repetitions per point");
  bench->add_option("--out", bench_out, "Output directory");

  auto * gen = app.add_subcommand("gen", "Generate synthetic scenes");
  std::uint64_t seed = 1;
  int count = 1;
  propscore::SyntheticSpec spec;
  std::string gen_out = ".";
  std::string gen_mode = "navsim";
  gen->add_option("--seed", seed, "First seed");
  gen->add_option("--count", count, "Number of scenes (consecutive seeds)");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--mode", gen_mode, "navsim|bench2drive")
    ->check(CLI::IsMember({"navsim", "bench2drive"}));
  gen->add_option("--road-half-width", spec.road_half_width, "Road half width [4,20] m");
  gen->add_option("--max-agents", spec.max_agents, "Max agents [0,12]");
  gen->add_option("--min-speed", spec.min_speed, "Min ego speed m/s");
  gen->add_option("--max-speed", spec.max_speed, "Max ego speed m/s");
  gen->add_option("--horizon-steps", spec.horizon_steps, "Planning steps T");

  CLI11_PARSE(app, argc, argv);

  try {
    if (score->parsed()) return cmd_score(manifest);
    if (labels->parsed()) return cmd_labels(manifest, with_loss_check);
    if (correlate->parsed()) return cmd_correlate(csv_paths, corr_out);
    if (bench->parsed()) return cmd_bench(proposal_sweep, grid_sweep, reps, bench_out);
    if (gen->parsed()) {
      spec.mode = propscore::scoring_mode_from_string(gen_mode);
      if (spec.mode == propscore::ScoringMode::bench2drive && spec.horizon_steps == 8) {
        spec.horizon_steps = 6;
      }
      if (count < 0) throw propscore::SchemaError("gen: count must be >= 0");
      return cmd_gen(seed, count, spec, gen_out);
    }
  } catch (const propscore::SchemaError & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const propscore::ValidationError & e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
