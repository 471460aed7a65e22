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
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "propscore/core.hpp"
#include "propscore/geometry.hpp"
#include "propscore/scene.hpp"
#include "propscore/synthetic.hpp"

namespace propscore
{

/// Dense row-major tensor of doubles (float32 on disk).
struct Tensor
{
  std::vector<std::size_t> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<std::size_t> shape)
  {
    Tensor t;
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    t.shape = std::move(shape);
    t.data.assign(n, 0.0);
    return t;
  }

  std::size_t size() const { return data.size(); }
  double & operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

/// One camera view's feature map, C x H x W, bilinearly indexable.
struct FeatureView
{
  CameraModel camera;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // (c * height + y) * width + x

  double at(std::size_t c, std::size_t y, std::size_t x) const
  {
    return data[(c * height + y) * width + x];
  }
};

struct FeatureGrid
{
  std::vector<FeatureView> views;
};

/// Standard 4-neighbor bilinear interpolation in (x, y) = (column, row)
/// coordinates. Points outside [0, W-1] x [0, H-1] return the zero vector.
inline std::vector<double> bilinear_sample(const FeatureView & view, const Vec2 & p)
{
  std::vector<double> out(view.channels, 0.0);
  if (p.x < 0.0 || p.y < 0.0 || p.x > static_cast<double>(view.width - 1) ||
      p.y > static_cast<double>(view.height - 1)) {
    return out;
  }
  const auto x0 = static_cast<std::size_t>(p.x);
  const auto y0 = static_cast<std::size_t>(p.y);
  const std::size_t x1 = std::min(x0 + 1, view.width - 1);
  const std::size_t y1 = std::min(y0 + 1, view.height - 1);
  const double fx = p.x - static_cast<double>(x0);
  const double fy = p.y - static_cast<double>(y0);
  for (std::size_t c = 0; c < view.channels; ++c) {
    const double top = (1.0 - fx) * view.at(c, y0, x0) + fx * view.at(c, y0, x1);
    const double bot = (1.0 - fx) * view.at(c, y1, x0) + fx * view.at(c, y1, x1);
    out[c] = (1.0 - fy) * top + fy * bot;
  }
  return out;
}

struct AttentionBlockWeights
{
  std::size_t channels = 0;
  std::size_t heads = 0;
  std::size_t keys = 0;
  Tensor head_out;     // (heads, C, C/heads)  -- W_i
  Tensor head_in;      // (heads, C/heads, C)  -- W'_i
  Tensor offset_w;     // (heads*keys*2, C)
  Tensor offset_b;     // (heads*keys*2)
  Tensor weight_w;     // (heads*keys, C)
  Tensor weight_b;     // (heads*keys)
};

/// Deformable attention at a single reference point:
///   out = sum_i W_i sum_j A_ij * W'_i x(p + dp_ij)
/// with per-head softmax-normalized A and predicted offsets dp, both linear
/// functions of the query. The value field is supplied as a sampler.
inline std::vector<double> deform_attn(
  const std::vector<double> & q, const Vec2 & p,
  const std::function<std::vector<double>(const Vec2 &)> & sample,
  const AttentionBlockWeights & w)
{
  const std::size_t C = w.channels;
  const std::size_t H = w.heads;
  const std::size_t K = w.keys;
  const std::size_t head_dim = C / H;
  if (q.size() != C) throw ValidationError("deform_attn: query size mismatch");

  std::vector<double> offsets(H * K * 2);
  for (std::size_t r = 0; r < H * K * 2; ++r) {
    double v = w.offset_b[r];
    for (std::size_t c = 0; c < C; ++c) v += w.offset_w[r * C + c] * q[c];
    offsets[r] = v;
  }
  std::vector<double> logits(H * K);
  for (std::size_t r = 0; r < H * K; ++r) {
    double v = w.weight_b[r];
    for (std::size_t c = 0; c < C; ++c) v += w.weight_w[r * C + c] * q[c];
    logits[r] = v;
  }

  std::vector<double> out(C, 0.0);
  std::vector<double> head_sum(head_dim);
  std::vector<double> proj(head_dim);
  for (std::size_t i = 0; i < H; ++i) {
    // Softmax over the keys of this head.
    double mx = logits[i * K];
    for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, logits[i * K + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < K; ++j) denom += std::exp(logits[i * K + j] - mx);

    std::fill(head_sum.begin(), head_sum.end(), 0.0);
    for (std::size_t j = 0; j < K; ++j) {
      const double a = std::exp(logits[i * K + j] - mx) / denom;
      const Vec2 sp{p.x + offsets[(i * K + j) * 2], p.y + offsets[(i * K + j) * 2 + 1]};
      const auto value = sample(sp);
      for (std::size_t d = 0; d < head_dim; ++d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) acc += w.head_in[(i * head_dim + d) * C + c] * value[c];
        proj[d] = acc;
      }
      for (std::size_t d = 0; d < head_dim; ++d) head_sum[d] += a * proj[d];
    }
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t d = 0; d < head_dim; ++d) {
        acc += w.head_out[(i * C + c) * head_dim + d] * head_sum[d];
      }
      out[c] += acc;
    }
  }
  return out;
}

struct KernelConfig
{
  std::size_t num_proposals = 64;  // N
  std::size_t num_steps = 8;       // T
  std::size_t iterations = 4;      // K
  std::size_t channels = 256;      // C
  std::size_t heads = 8;
  std::size_t keys = 4;
  std::size_t n_ref = 4;
  std::size_t hidden = 256;
  std::size_t status_dim = 4;
  double z_min = -1.0;
  double z_max = 3.0;
  double feature_stride = 8.0;
  // BEV value grid for self-attention.
  double bev_origin_x = -64.0;
  double bev_origin_y = -64.0;
  double bev_cell = 1.0;
  std::size_t bev_rows = 128;
  std::size_t bev_cols = 128;
};

struct KernelWeights
{
  KernelConfig config;
  Tensor ego_encoder_w;   // (status_dim, C)
  Tensor ego_encoder_b;   // (C)
  Tensor pos_embed;       // (N, T, C)
  Tensor proposal_w1;     // (hidden, C)
  Tensor proposal_b1;     // (hidden)
  Tensor proposal_w2;     // (3, hidden)
  Tensor proposal_b2;     // (3)
  AttentionBlockWeights sa;
  AttentionBlockWeights sca;
  Tensor query_update_w;  // (C, C)
  Tensor query_update_b;  // (C)
  Tensor score_w1;        // (hidden, C)
  Tensor score_b1;        // (hidden)
  Tensor score_w2;        // (1, hidden)
  Tensor score_b2;        // (1)
};

struct QueryTensor
{
  std::size_t num_proposals = 0;
  std::size_t num_steps = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // (n * T + t) * C + c

  double * at(std::size_t n, std::size_t t)
  {
    return values.data() + (n * num_steps + t) * channels;
  }
  const double * at(std::size_t n, std::size_t t) const
  {
    return values.data() + (n * num_steps + t) * channels;
  }
};

struct ProposalTensor
{
  std::size_t num_proposals = 0;
  std::size_t num_steps = 0;
  std::vector<Pose2D> poses;  // n * T + t

  Pose2D & at(std::size_t n, std::size_t t) { return poses[n * num_steps + t]; }
  const Pose2D & at(std::size_t n, std::size_t t) const { return poses[n * num_steps + t]; }
};

// ---------------------------------------------------------------------------
// Weight initialization and the weights-file container.

namespace detail
{

inline std::uint64_t fnv1a(const std::string & s)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Per-tensor stream: SplitMix64 seeded by (seed xor fnv1a(name)), entries
/// uniform in [-scale, scale].
inline Tensor random_tensor(
  std::uint64_t seed, const std::string & name, std::vector<std::size_t> shape, double scale)
{
  Tensor t = Tensor::zeros(std::move(shape));
  SplitMix64 rng(seed ^ fnv1a(name));
  for (auto & v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace detail

inline AttentionBlockWeights random_attention_block(
  std::uint64_t seed, const std::string & prefix, std::size_t channels, std::size_t heads,
  std::size_t keys, double offset_scale)
{
  if (channels % heads != 0) throw ValidationError("attention: channels not divisible by heads");
  AttentionBlockWeights w;
  w.channels = channels;
  w.heads = heads;
  w.keys = keys;
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels));
  w.head_out = detail::random_tensor(seed, prefix + ".head_out",
                                     {heads, channels, channels / heads}, scale);
  w.head_in = detail::random_tensor(seed, prefix + ".head_in",
                                    {heads, channels / heads, channels}, scale);
  w.offset_w =
    detail::random_tensor(seed, prefix + ".offset_w", {heads * keys * 2, channels}, offset_scale);
  w.offset_b = detail::random_tensor(seed, prefix + ".offset_b", {heads * keys * 2}, offset_scale);
  w.weight_w = detail::random_tensor(seed, prefix + ".weight_w", {heads * keys, channels}, scale);
  w.weight_b = detail::random_tensor(seed, prefix + ".weight_b", {heads * keys}, scale);
  return w;
}

inline KernelWeights random_kernel_weights(std::uint64_t seed, const KernelConfig & cfg)
{
  KernelWeights w;
  w.config = cfg;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
  w.ego_encoder_w =
    detail::random_tensor(seed, "ego_encoder_w", {cfg.status_dim, cfg.channels}, scale);
  w.ego_encoder_b = detail::random_tensor(seed, "ego_encoder_b", {cfg.channels}, scale);
  w.pos_embed = detail::random_tensor(
    seed, "pos_embed", {cfg.num_proposals, cfg.num_steps, cfg.channels}, 1.0);
  w.proposal_w1 = detail::random_tensor(seed, "proposal_w1", {cfg.hidden, cfg.channels}, scale);
  w.proposal_b1 = detail::random_tensor(seed, "proposal_b1", {cfg.hidden}, scale);
  w.proposal_w2 = detail::random_tensor(
    seed, "proposal_w2", {3, cfg.hidden}, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  w.proposal_b2 = detail::random_tensor(seed, "proposal_b2", {3}, 0.5);
  w.sa = random_attention_block(seed, "sa", cfg.channels, cfg.heads, cfg.keys, 0.5);
  w.sca = random_attention_block(seed, "sca", cfg.channels, cfg.heads, cfg.keys, 0.5);
  w.query_update_w =
    detail::random_tensor(seed, "query_update_w", {cfg.channels, cfg.channels}, scale);
  w.query_update_b = detail::random_tensor(seed, "query_update_b", {cfg.channels}, scale);
  w.score_w1 = detail::random_tensor(seed, "score_w1", {cfg.hidden, cfg.channels}, scale);
  w.score_b1 = detail::random_tensor(seed, "score_b1", {cfg.hidden}, scale);
  w.score_w2 = detail::random_tensor(
    seed, "score_w2", {1, cfg.hidden}, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  w.score_b2 = detail::random_tensor(seed, "score_b2", {1}, 0.5);
  return w;
}

// ---------------------------------------------------------------------------
// Forward operations.

namespace detail
{

inline void linear(
  const Tensor & w, const Tensor & b, const double * in, std::size_t in_dim, double * out,
  std::size_t out_dim)
{
  for (std::size_t r = 0; r < out_dim; ++r) {
    double v = b[r];
    for (std::size_t c = 0; c < in_dim; ++c) v += w[r * in_dim + c] * in[c];
    out[r] = v;
  }
}

}  // namespace detail

/// Regresses absolute (x, y, heading) per query through the shared MLP.
inline ProposalTensor proposal_mlp(const QueryTensor & q, const KernelWeights & w)
{
  const auto & cfg = w.config;
  ProposalTensor p;
  p.num_proposals = q.num_proposals;
  p.num_steps = q.num_steps;
  p.poses.resize(q.num_proposals * q.num_steps);
  std::vector<double> hidden(cfg.hidden);
  double head[3];
  for (std::size_t n = 0; n < q.num_proposals; ++n) {
    for (std::size_t t = 0; t < q.num_steps; ++t) {
      detail::linear(w.proposal_w1, w.proposal_b1, q.at(n, t), cfg.channels, hidden.data(),
                     cfg.hidden);
      for (auto & h : hidden) h = std::max(h, 0.0);
      detail::linear(w.proposal_w2, w.proposal_b2, hidden.data(), cfg.hidden, head, 3);
      p.at(n, t) = {head[0], head[1], wrap_angle(head[2])};
    }
  }
  return p;
}

/// BEV value grid built by scattering the query vectors at their proposal
/// anchors; colliding queries are mean-pooled, empty cells stay zero.
struct BevValueGrid
{
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // (c * rows + row) * cols + col
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell = 1.0;

  Vec2 grid_coords(const Vec2 & world) const
  {
    return {(world.x - origin_x) / cell, (world.y - origin_y) / cell};
  }
};

inline BevValueGrid scatter_query_grid(
  const QueryTensor & q, const ProposalTensor & p, const KernelConfig & cfg)
{
  BevValueGrid grid;
  grid.channels = cfg.channels;
  grid.rows = cfg.bev_rows;
  grid.cols = cfg.bev_cols;
  grid.origin_x = cfg.bev_origin_x;
  grid.origin_y = cfg.bev_origin_y;
  grid.cell = cfg.bev_cell;
  grid.data.assign(cfg.channels * cfg.bev_rows * cfg.bev_cols, 0.0);
  std::vector<int> counts(cfg.bev_rows * cfg.bev_cols, 0);
  for (std::size_t n = 0; n < q.num_proposals; ++n) {
    for (std::size_t t = 0; t < q.num_steps; ++t) {
      const Vec2 g = grid.grid_coords(p.at(n, t).position());
      const auto col = static_cast<long long>(std::llround(g.x));
      const auto row = static_cast<long long>(std::llround(g.y));
      if (col < 0 || row < 0 || col >= static_cast<long long>(grid.cols) ||
          row >= static_cast<long long>(grid.rows)) {
        continue;
      }
      const std::size_t cell = static_cast<std::size_t>(row) * grid.cols +
                               static_cast<std::size_t>(col);
      ++counts[cell];
      const double * qv = q.at(n, t);
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        grid.data[c * grid.rows * grid.cols + cell] += qv[c];
      }
    }
  }
  for (std::size_t cell = 0; cell < counts.size(); ++cell) {
    if (counts[cell] > 1) {
      const double inv = 1.0 / static_cast<double>(counts[cell]);
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        grid.data[c * grid.rows * grid.cols + cell] *= inv;
      }
    }
  }
  return grid;
}

inline std::vector<double> sample_bev_grid(const BevValueGrid & grid, const Vec2 & p)
{
  std::vector<double> out(grid.channels, 0.0);
  if (p.x < 0.0 || p.y < 0.0 || p.x > static_cast<double>(grid.cols - 1) ||
      p.y > static_cast<double>(grid.rows - 1)) {
    return out;
  }
  const auto x0 = static_cast<std::size_t>(p.x);
  const auto y0 = static_cast<std::size_t>(p.y);
  const std::size_t x1 = std::min(x0 + 1, grid.cols - 1);
  const std::size_t y1 = std::min(y0 + 1, grid.rows - 1);
  const double fx = p.x - static_cast<double>(x0);
  const double fy = p.y - static_cast<double>(y0);
  const std::size_t plane = grid.rows * grid.cols;
  for (std::size_t c = 0; c < grid.channels; ++c) {
    const double * d = grid.data.data() + c * plane;
    const double top = (1.0 - fx) * d[y0 * grid.cols + x0] + fx * d[y0 * grid.cols + x1];
    const double bot = (1.0 - fx) * d[y1 * grid.cols + x0] + fx * d[y1 * grid.cols + x1];
    out[c] = (1.0 - fy) * top + fy * bot;
  }
  return out;
}

/// Proposal-anchored deformable self-attention with a residual connection.
inline QueryTensor self_attn_step(
  const QueryTensor & q, const ProposalTensor & p, const KernelWeights & w)
{
  const BevValueGrid grid = scatter_query_grid(q, p, w.config);
  const auto sampler = [&grid](const Vec2 & pt) { return sample_bev_grid(grid, pt); };
  QueryTensor out = q;
  std::vector<double> query(w.config.channels);
  for (std::size_t n = 0; n < q.num_proposals; ++n) {
    for (std::size_t t = 0; t < q.num_steps; ++t) {
      const double * qv = q.at(n, t);
      query.assign(qv, qv + w.config.channels);
      const Vec2 anchor = grid.grid_coords(p.at(n, t).position());
      const auto delta = deform_attn(query, anchor, sampler, w.sa);
      double * ov = out.at(n, t);
      for (std::size_t c = 0; c < w.config.channels; ++c) ov[c] += delta[c];
    }
  }
  return out;
}

struct PillarPoint
{
  Vec2 pixel{};
  bool hit = false;
};

/// Lifts a BEV corner into a vertical pillar of n_ref points evenly spaced
/// over [z_min, z_max] and projects each into the camera. A point hits when
/// its depth is positive and the pixel lies within the image bounds.
inline std::vector<PillarPoint> project_pillar_points(
  const Vec2 & corner, const CameraModel & cam, double z_min, double z_max, std::size_t n_ref)
{
  std::vector<PillarPoint> out;
  out.reserve(n_ref);
  for (std::size_t l = 0; l < n_ref; ++l) {
    const double z = n_ref > 1
                       ? z_min + (z_max - z_min) * static_cast<double>(l) /
                                   static_cast<double>(n_ref - 1)
                       : 0.5 * (z_min + z_max);
    const double wx = corner.x, wy = corner.y, wz = z;
    const auto & R = cam.rotation;
    const auto & tr = cam.translation;
    const double cx = R[0] * wx + R[1] * wy + R[2] * wz + tr[0];
    const double cy = R[3] * wx + R[4] * wy + R[5] * wz + tr[1];
    const double cz = R[6] * wx + R[7] * wy + R[8] * wz + tr[2];
    PillarPoint pt;
    if (cz > 0.0) {
      const auto & K = cam.intrinsics;
      const double u = (K[0] * cx + K[1] * cy + K[2] * cz) / cz;
      const double v = (K[3] * cx + K[4] * cy + K[5] * cz) / cz;
      pt.pixel = {u, v};
      pt.hit = u >= 0.0 && v >= 0.0 && u <= static_cast<double>(cam.image_width) &&
               v <= static_cast<double>(cam.image_height);
    }
    out.push_back(pt);
  }
  return out;
}

/// Spatial cross-attention over the proposal's four corner pillars. Each hit
/// view contributes the mean of its hit-point attentions; the view
/// contributions are averaged over |V_hit|. Queries with no hit view pass
/// through unchanged.
inline QueryTensor spatial_cross_attn(
  const QueryTensor & q, const ProposalTensor & p, const FeatureGrid & grid,
  const VehicleDims & dims, const KernelWeights & w)
{
  const auto & cfg = w.config;
  QueryTensor out = q;
  std::vector<double> query(cfg.channels);
  for (std::size_t n = 0; n < q.num_proposals; ++n) {
    for (std::size_t t = 0; t < q.num_steps; ++t) {
      const Pose2D & pose = p.at(n, t);
      const auto corners = box_corners(OrientedBox{pose, dims.length, dims.width});
      const double * qv = q.at(n, t);
      query.assign(qv, qv + cfg.channels);

      std::vector<double> accum(cfg.channels, 0.0);
      std::size_t hit_views = 0;
      for (const auto & view : grid.views) {
        std::vector<Vec2> hit_points;
        for (const auto & corner : corners) {
          for (const auto & pt :
               project_pillar_points(corner, view.camera, cfg.z_min, cfg.z_max, cfg.n_ref)) {
            if (pt.hit) hit_points.push_back(pt.pixel);
          }
        }
        if (hit_points.empty()) continue;
        ++hit_views;
        std::vector<double> view_sum(cfg.channels, 0.0);
        const auto sampler = [&view](const Vec2 & pt) { return bilinear_sample(view, pt); };
        for (const auto & pixel : hit_points) {
          const Vec2 map_pt{pixel.x / cfg.feature_stride, pixel.y / cfg.feature_stride};
          const auto contrib = deform_attn(query, map_pt, sampler, w.sca);
          for (std::size_t c = 0; c < cfg.channels; ++c) view_sum[c] += contrib[c];
        }
        const double inv = 1.0 / static_cast<double>(hit_points.size());
        for (std::size_t c = 0; c < cfg.channels; ++c) accum[c] += view_sum[c] * inv;
      }
      if (hit_views == 0) continue;
      const double inv_views = 1.0 / static_cast<double>(hit_views);
      double * ov = out.at(n, t);
      for (std::size_t c = 0; c < cfg.channels; ++c) ov[c] += accum[c] * inv_views;
    }
  }
  return out;
}

inline QueryTensor query_update(const QueryTensor & q, const KernelWeights & w)
{
  const std::size_t C = w.config.channels;
  QueryTensor out = q;
  std::vector<double> in(C);
  for (std::size_t n = 0; n < q.num_proposals; ++n) {
    for (std::size_t t = 0; t < q.num_steps; ++t) {
      const double * qv = q.at(n, t);
      in.assign(qv, qv + C);
      detail::linear(w.query_update_w, w.query_update_b, in.data(), C, out.at(n, t), C);
    }
  }
  return out;
}

struct ProFormerOutput
{
  std::vector<ProposalTensor> proposals_per_iter;  // K entries
  QueryTensor final_queries;
};

/// Runs K shared-weight refinement iterations:
///   Q_0 = pos_embed + ego_encoder(status);   per iteration:
///   P_k = proposal_mlp(Q_k); SA; SCA; linear update -> Q_{k+1}.
inline ProFormerOutput run_proformer(
  const std::vector<double> & ego_status, const FeatureGrid & grid, const VehicleDims & dims,
  const KernelWeights & w)
{
  const auto & cfg = w.config;
  if (ego_status.size() != cfg.status_dim) {
    throw ValidationError("run_proformer: ego status dimension mismatch");
  }
  std::vector<double> ego_feat(cfg.channels, 0.0);
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    double v = w.ego_encoder_b[c];
    for (std::size_t s = 0; s < cfg.status_dim; ++s) {
      v += w.ego_encoder_w[s * cfg.channels + c] * ego_status[s];
    }
    ego_feat[c] = v;
  }

  QueryTensor q;
  q.num_proposals = cfg.num_proposals;
  q.num_steps = cfg.num_steps;
  q.channels = cfg.channels;
  q.values.resize(cfg.num_proposals * cfg.num_steps * cfg.channels);
  for (std::size_t n = 0; n < cfg.num_proposals; ++n) {
    for (std::size_t t = 0; t < cfg.num_steps; ++t) {
      double * qv = q.at(n, t);
      const double * pe = w.pos_embed.data.data() + (n * cfg.num_steps + t) * cfg.channels;
      for (std::size_t c = 0; c < cfg.channels; ++c) qv[c] = pe[c] + ego_feat[c];
    }
  }

  ProFormerOutput out;
  out.proposals_per_iter.reserve(cfg.iterations);
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    ProposalTensor p = proposal_mlp(q, w);
    q = self_attn_step(q, p, w);
    q = spatial_cross_attn(q, p, grid, dims, w);
    q = query_update(q, w);
    out.proposals_per_iter.push_back(std::move(p));
  }
  out.final_queries = std::move(q);
  return out;
}

/// Per-proposal score: channelwise max-pool over time, MLP, logistic squash.
inline std::vector<double> score_head(const QueryTensor & q, const KernelWeights & w)
{
  const auto & cfg = w.config;
  std::vector<double> scores(q.num_proposals);
  std::vector<double> pooled(cfg.channels);
  std::vector<double> hidden(cfg.hidden);
  for (std::size_t n = 0; n < q.num_proposals; ++n) {
    const double * first = q.at(n, 0);
    pooled.assign(first, first + cfg.channels);
    for (std::size_t t = 1; t < q.num_steps; ++t) {
      const double * qv = q.at(n, t);
      for (std::size_t c = 0; c < cfg.channels; ++c) pooled[c] = std::max(pooled[c], qv[c]);
    }
    detail::linear(w.score_w1, w.score_b1, pooled.data(), cfg.channels, hidden.data(), cfg.hidden);
    for (auto & h : hidden) h = std::max(h, 0.0);
    double logit = w.score_b2[0];
    for (std::size_t h = 0; h < cfg.hidden; ++h) logit += w.score_w2[h] * hidden[h];
    scores[n] = 1.0 / (1.0 + std::exp(-logit));
  }
  return scores;
}

/// Argmax with smallest-index tie-break.
inline std::size_t select_best(const std::vector<double> & scores)
{
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Weights container: 8-byte little-endian header length, JSON header with
// config and tensor directory (byte offsets into the payload), then the
// concatenated little-endian float32 payload.

namespace detail
{

inline void collect_tensors(
  KernelWeights & w, std::vector<std::pair<std::string, Tensor *>> & out)
{
  out = {
    {"ego_encoder_w", &w.ego_encoder_w},   {"ego_encoder_b", &w.ego_encoder_b},
    {"pos_embed", &w.pos_embed},           {"proposal_w1", &w.proposal_w1},
    {"proposal_b1", &w.proposal_b1},       {"proposal_w2", &w.proposal_w2},
    {"proposal_b2", &w.proposal_b2},       {"sa.head_out", &w.sa.head_out},
    {"sa.head_in", &w.sa.head_in},         {"sa.offset_w", &w.sa.offset_w},
    {"sa.offset_b", &w.sa.offset_b},       {"sa.weight_w", &w.sa.weight_w},
    {"sa.weight_b", &w.sa.weight_b},       {"sca.head_out", &w.sca.head_out},
    {"sca.head_in", &w.sca.head_in},       {"sca.offset_w", &w.sca.offset_w},
    {"sca.offset_b", &w.sca.offset_b},     {"sca.weight_w", &w.sca.weight_w},
    {"sca.weight_b", &w.sca.weight_b},     {"query_update_w", &w.query_update_w},
    {"query_update_b", &w.query_update_b}, {"score_w1", &w.score_w1},
    {"score_b1", &w.score_b1},             {"score_w2", &w.score_w2},
    {"score_b2", &w.score_b2},
  };
}

inline nlohmann::json config_to_json(const KernelConfig & c)
{
  return {
    {"num_proposals", c.num_proposals}, {"num_steps", c.num_steps},
    {"iterations", c.iterations},       {"channels", c.channels},
    {"heads", c.heads},                 {"keys", c.keys},
    {"n_ref", c.n_ref},                 {"hidden", c.hidden},
    {"status_dim", c.status_dim},       {"z_min", c.z_min},
    {"z_max", c.z_max},                 {"feature_stride", c.feature_stride},
    {"bev_origin_x", c.bev_origin_x},   {"bev_origin_y", c.bev_origin_y},
    {"bev_cell", c.bev_cell},           {"bev_rows", c.bev_rows},
    {"bev_cols", c.bev_cols},
  };
}

inline KernelConfig config_from_json(const nlohmann::json & j)
{
  KernelConfig c;
  c.num_proposals = j.at("num_proposals").get<std::size_t>();
  c.num_steps = j.at("num_steps").get<std::size_t>();
  c.iterations = j.at("iterations").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.keys = j.at("keys").get<std::size_t>();
  c.n_ref = j.at("n_ref").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.status_dim = j.at("status_dim").get<std::size_t>();
  c.z_min = j.at("z_min").get<double>();
  c.z_max = j.at("z_max").get<double>();
  c.feature_stride = j.at("feature_stride").get<double>();
  c.bev_origin_x = j.at("bev_origin_x").get<double>();
  c.bev_origin_y = j.at("bev_origin_y").get<double>();
  c.bev_cell = j.at("bev_cell").get<double>();
  c.bev_rows = j.at("bev_rows").get<std::size_t>();
  c.bev_cols = j.at("bev_cols").get<std::size_t>();
  return c;
}

}  // namespace detail

inline void save_kernel_weights(const KernelWeights & weights, const std::string & path)
{
  KernelWeights w = weights;
  std::vector<std::pair<std::string, Tensor *>> tensors;
  detail::collect_tensors(w, tensors);

  nlohmann::json header;
  header["config"] = detail::config_to_json(w.config);
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto & [name, t] : tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}});
    offset += t->size() * sizeof(float);
  }
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write weights file '" + path + "'");
  const std::uint64_t hlen = htext.size();
  unsigned char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<unsigned char>((hlen >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char *>(lenbuf), 8);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  std::vector<float> buf;
  for (const auto & [name, t] : tensors) {
    buf.resize(t->size());
    for (std::size_t i = 0; i < t->size(); ++i) buf[i] = static_cast<float>(t->data[i]);
    out.write(reinterpret_cast<const char *>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

inline KernelWeights load_kernel_weights(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open weights file '" + path + "'");
  unsigned char lenbuf[8];
  in.read(reinterpret_cast<char *>(lenbuf), 8);
  if (!in) throw SchemaError("weights file truncated: '" + path + "'");
  std::uint64_t hlen = 0;
  for (int i = 7; i >= 0; --i) hlen = (hlen << 8) | lenbuf[i];
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw SchemaError("weights file truncated: '" + path + "'");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::parse_error & e) {
    throw SchemaError(std::string("weights header parse error: ") + e.what());
  }

  KernelWeights w;
  w.config = detail::config_from_json(header.at("config"));
  w.sa.channels = w.sca.channels = w.config.channels;
  w.sa.heads = w.sca.heads = w.config.heads;
  w.sa.keys = w.sca.keys = w.config.keys;

  std::vector<std::pair<std::string, Tensor *>> tensors;
  detail::collect_tensors(w, tensors);
  std::map<std::string, Tensor *> by_name(tensors.begin(), tensors.end());

  const std::streampos payload_start = in.tellg();
  for (const auto & jt : header.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw SchemaError("weights: unknown tensor '" + name + "'");
    Tensor & t = *it->second;
    t.shape = jt.at("shape").get<std::vector<std::size_t>>();
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    t.data.resize(n);
    in.seekg(payload_start + static_cast<std::streamoff>(jt.at("offset").get<std::size_t>()));
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char *>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw SchemaError("weights payload truncated: '" + path + "'");
    for (std::size_t i = 0; i < n; ++i) t.data[i] = static_cast<double>(buf[i]);
  }
  return w;
}

}  // namespace propscore
