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
#include <chrono>
#include <sstream>
#include <string>
#include <vector>

#include "propscore/kernel.hpp"

namespace propscore
{

struct BenchRow
{
  std::string kind;       // "iteration" or "dense"
  std::size_t size_param = 0;
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
  std::size_t reps = 0;
};

namespace detail
{

inline double quantile(std::vector<double> sorted, double q)
{
  const double idx = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double f = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - f) + sorted[hi] * f;
}

template <class Fn>
BenchRow time_fn(const std::string & kind, std::size_t size_param, std::size_t reps, Fn && fn)
{
  using clock = std::chrono::steady_clock;
  std::vector<double> samples;
  samples.reserve(reps);
  fn();  // warmup
  for (std::size_t r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    fn();
    const auto t1 = clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  BenchRow row;
  row.kind = kind;
  row.size_param = size_param;
  row.median_ms = quantile(samples, 0.5);
  row.p10_ms = quantile(samples, 0.1);
  row.p90_ms = quantile(samples, 0.9);
  row.reps = reps;
  return row;
}

inline FeatureGrid bench_feature_grid(std::size_t channels, std::uint64_t seed)
{
  FeatureGrid grid;
  FeatureView view;
  view.camera.view_id = "front";
  view.camera.intrinsics = {200.0, 0.0, 160.0, 0.0, 200.0, 120.0, 0.0, 0.0, 1.0};
  view.camera.rotation = {0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0};
  view.camera.translation = {0.0, 1.6, 0.0};
  view.camera.image_width = 320;
  view.camera.image_height = 240;
  view.channels = channels;
  view.height = 30;
  view.width = 40;
  view.data.resize(channels * view.height * view.width);
  SplitMix64 rng(seed);
  for (auto & v : view.data) v = rng.uniform(-1.0, 1.0);
  grid.views.push_back(std::move(view));
  return grid;
}

}  // namespace detail

/// Times (a) one full ProFormer iteration against the number of proposals and
/// (b) a dense-grid cross-attention baseline (one query per BEV cell) against
/// the grid side length.
inline std::vector<BenchRow> bench_attention(
  const std::vector<std::size_t> & proposal_sweep, const std::vector<std::size_t> & grid_sweep,
  std::size_t reps = 20)
{
  if (proposal_sweep.empty() || grid_sweep.empty()) {
    throw ValidationError("bench_attention: empty sweep");
  }
  if (reps < 1) throw ValidationError("bench_attention: reps must be >= 1");
  std::vector<BenchRow> rows;
  const VehicleDims dims{4.5, 2.0, 2.8};

  for (const std::size_t n : proposal_sweep) {
    KernelConfig cfg;
    cfg.num_proposals = n;
    cfg.num_steps = 4;
    cfg.iterations = 1;
    cfg.channels = 32;
    cfg.heads = 4;
    cfg.keys = 4;
    cfg.n_ref = 2;
    cfg.hidden = 32;
    cfg.feature_stride = 8.0;
    cfg.bev_origin_x = cfg.bev_origin_y = -32.0;
    cfg.bev_rows = cfg.bev_cols = 64;
    const KernelWeights w = random_kernel_weights(7, cfg);
    const FeatureGrid grid = detail::bench_feature_grid(cfg.channels, 11);
    const std::vector<double> status{5.0, 0.0, 1.0, 0.0};
    rows.push_back(detail::time_fn("iteration", n, reps, [&] {
      const auto out = run_proformer(status, grid, dims, w);
      volatile double sink = out.final_queries.values.front();
      (void)sink;
    }));
  }

  for (const std::size_t side : grid_sweep) {
    KernelConfig cfg;
    cfg.num_proposals = side * side;  // one query per BEV cell
    cfg.num_steps = 1;
    cfg.channels = 16;
    cfg.heads = 2;
    cfg.keys = 2;
    cfg.n_ref = 2;
    cfg.hidden = 16;
    cfg.feature_stride = 8.0;
    const KernelWeights w = random_kernel_weights(13, cfg);
    const FeatureGrid grid = detail::bench_feature_grid(cfg.channels, 17);

    QueryTensor q;
    q.num_proposals = cfg.num_proposals;
    q.num_steps = 1;
    q.channels = cfg.channels;
    q.values.resize(cfg.num_proposals * cfg.channels);
    SplitMix64 rng(19);
    for (auto & v : q.values) v = rng.uniform(-1.0, 1.0);

    ProposalTensor p;
    p.num_proposals = cfg.num_proposals;
    p.num_steps = 1;
    p.poses.resize(cfg.num_proposals);
    const double extent = 64.0;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        p.poses[r * side + c] = {
          extent * (static_cast<double>(c) + 0.5) / static_cast<double>(side),
          extent * ((static_cast<double>(r) + 0.5) / static_cast<double>(side) - 0.5), 0.0};
      }
    }
    rows.push_back(detail::time_fn("dense", side, reps, [&] {
      const auto out = spatial_cross_attn(q, p, grid, dims, w);
      volatile double sink = out.values.front();
      (void)sink;
    }));
  }
  return rows;
}

inline std::string bench_rows_to_csv(const std::vector<BenchRow> & rows)
{
  std::ostringstream ss;
  ss.imbue(std::locale::classic());
  ss << "kind,size_param,median_ms,p10_ms,p90_ms,reps\n";
  for (const auto & r : rows) {
    ss << r.kind << ',' << r.size_param << ',' << r.median_ms << ',' << r.p10_ms << ','
       << r.p90_ms << ',' << r.reps << '\n';
  }
  return ss.str();
}

}  // namespace propscore
