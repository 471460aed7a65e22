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
#include <cmath>
#include <limits>
#include <vector>

#include "propscore/core.hpp"
#include "propscore/labels.hpp"

namespace propscore
{

struct LossWeights
{
  double lambda_discount = 0.1;
  double w_score = 1.0;
  double w_map = 2.0;
  double w_pred = 1.0;
  double w_bce = 0.1;
};

/// Mean binary cross-entropy with predictions clamped to [eps, 1-eps].
inline double bce(const std::vector<double> & pred, const std::vector<double> & target)
{
  if (pred.size() != target.size() || pred.empty()) {
    throw ValidationError("bce: shape mismatch");
  }
  constexpr double eps = 1e-7;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double x = std::clamp(pred[i], eps, 1.0 - eps);
    const double y = target[i];
    sum += -y * std::log(x) - (1.0 - y) * std::log(1.0 - x);
  }
  return sum / static_cast<double>(pred.size());
}

/// Discounted minimum-over-proposals imitation loss:
/// sum_k lambda^(K-1-k) * min_n L1(P_k^n, expert), L1 elementwise over T x 3.
inline double mon_proposal_loss(
  const std::vector<std::vector<std::vector<Pose2D>>> & proposals_per_iter,
  const std::vector<Pose2D> & expert, double lambda)
{
  if (!(lambda > 0.0) || !(lambda < 1.0)) {
    throw ValidationError("mon_proposal_loss: lambda outside (0, 1)");
  }
  const std::size_t iterations = proposals_per_iter.size();
  if (iterations == 0) throw ValidationError("mon_proposal_loss: no iterations");
  double total = 0.0;
  for (std::size_t k = 0; k < iterations; ++k) {
    const auto & proposals = proposals_per_iter[k];
    if (proposals.empty()) throw ValidationError("mon_proposal_loss: empty proposal set");
    double best = std::numeric_limits<double>::infinity();
    for (const auto & p : proposals) {
      if (p.size() != expert.size()) {
        throw ValidationError("mon_proposal_loss: proposal/expert length mismatch");
      }
      double l1 = 0.0;
      for (std::size_t t = 0; t < p.size(); ++t) {
        l1 += std::abs(p[t].x - expert[t].x) + std::abs(p[t].y - expert[t].y) +
              std::abs(p[t].heading - expert[t].heading);
      }
      best = std::min(best, l1);
    }
    total += std::pow(lambda, static_cast<double>(iterations - 1 - k)) * best;
  }
  return total;
}

inline double score_loss(const std::vector<double> & s, const std::vector<double> & s_hat)
{
  return bce(s, s_hat);
}

inline double map_loss(const std::vector<double> & m, const MappingLabels & m_hat)
{
  if (m.size() != m_hat.values.size() * 2) throw ValidationError("map_loss: shape mismatch");
  std::vector<double> target;
  target.reserve(m.size());
  for (const auto & v : m_hat.values) {
    target.push_back(v[0] ? 1.0 : 0.0);
    target.push_back(v[1] ? 1.0 : 0.0);
  }
  return bce(m, target);
}

/// L1 over corner entries masked by target validity, plus weighted BCE over
/// the validity logits.
inline double pred_loss(
  const std::vector<double> & corners, const std::vector<double> & validity_probs,
  const PredictionTargets & targets, double w_bce)
{
  if (corners.size() != targets.corners.size() ||
      validity_probs.size() != targets.validity.size()) {
    throw ValidationError("pred_loss: shape mismatch");
  }
  double l1 = 0.0;
  std::size_t valid_entries = 0;
  for (std::size_t v = 0; v < targets.validity.size(); ++v) {
    if (!targets.validity[v]) continue;
    for (std::size_t e = 0; e < 8; ++e) {
      l1 += std::abs(corners[v * 8 + e] - targets.corners[v * 8 + e]);
      ++valid_entries;
    }
  }
  const double l1_mean = valid_entries > 0 ? l1 / static_cast<double>(valid_entries) : 0.0;
  std::vector<double> target;
  target.reserve(targets.validity.size());
  for (const bool v : targets.validity) target.push_back(v ? 1.0 : 0.0);
  return l1_mean + w_bce * bce(validity_probs, target);
}

struct LossParts
{
  double proposal = 0.0;
  double score = 0.0;
  double map = 0.0;
  double pred = 0.0;
};

inline double total_loss(const LossParts & parts, const LossWeights & w = LossWeights{})
{
  return parts.proposal + w.w_score * parts.score + w.w_map * parts.map + w.w_pred * parts.pred;
}

}  // namespace propscore
