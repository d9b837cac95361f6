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
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace macr {

enum class BsMode { Train, Test };

/// Item-bias baseline score: y_k + b_i while training (the bias is learned
/// jointly through the BCE loss), y_k alone at test time.
double bs_score(double y_k, double b_i, BsMode mode);

/// Inverse-propensity weight: min(1 / (popularity + smoothing), clip_max).
/// Batch renormalization to mean 1 happens in the loss.
double ipw_weight(std::uint32_t popularity, double smoothing, double clip_max);

/// Weighted mean BCE over logits; weights indexed per example.
double ipw_loss(std::span<const double> scores, std::span<const float> labels,
                std::span<const double> weights);

/// Per-item IPW weights from train popularity: smoothed inverse counts
/// clipped at the given quantile of the raw weight distribution.
std::vector<double> ipw_item_weights(const std::vector<std::uint32_t>& item_counts,
                                     double smoothing, double clip_quantile);

}  // namespace macr
