// Copyright 2026 MACR Contributors
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
#include "macr/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "macr/error.hpp"
#include "macr/model.hpp"

namespace macr {

double bs_score(double y_k, double b_i, BsMode mode) {
  return mode == BsMode::Train ? y_k + b_i : y_k;
}

double ipw_weight(std::uint32_t popularity, double smoothing, double clip_max) {
  const double raw = 1.0 / (static_cast<double>(popularity) + smoothing);
  return std::min(raw, clip_max);
}

double ipw_loss(std::span<const double> scores, std::span<const float> labels,
                std::span<const double> weights) {
  if (scores.size() != labels.size() || scores.size() != weights.size())
    throw UsageError("ipw_loss: length mismatch");
  if (scores.empty()) throw UsageError("ipw_loss: empty batch");
  double acc = 0.0, wsum = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const double p = sigmoid(scores[k]);
    const double term = -labels[k] * std::log(std::max(p, 1e-12)) -
                        (1.0 - labels[k]) * std::log(std::max(1.0 - p, 1e-12));
    acc += weights[k] * term;
    wsum += weights[k];
  }
  if (wsum <= 0.0) throw UsageError("ipw_loss: weights must be positive");
  return acc / wsum;
}

std::vector<double> ipw_item_weights(const std::vector<std::uint32_t>& item_counts,
                                     double smoothing, double clip_quantile) {
  if (smoothing <= 0.0) throw UsageError("ipw smoothing must be positive");
  std::vector<double> raw(item_counts.size());
  for (std::size_t i = 0; i < item_counts.size(); ++i)
    raw[i] = 1.0 / (static_cast<double>(item_counts[i]) + smoothing);

  std::vector<double> sorted = raw;
  std::sort(sorted.begin(), sorted.end());
  const auto idx = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(sorted.size() - 1),
                       clip_quantile * static_cast<double>(sorted.size() - 1)));
  const double clip_max = sorted[idx];
  for (auto& w : raw) w = std::min(w, clip_max);
  return raw;
}

}  // namespace macr
