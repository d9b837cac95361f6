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
#include <optional>
#include <string>
#include <vector>

#include "macr/dataset.hpp"
#include "macr/model.hpp"

namespace macr {

enum class ScoreMode { TE, TIE };

std::string to_string(ScoreMode mode);
ScoreMode score_mode_from_string(const std::string& name);

enum class Metric { HR, Recall, NDCG };

std::string to_string(Metric metric);
Metric metric_from_string(const std::string& name);

/// Ordered top-K lists per evaluated user. Ties in score break toward the
/// smaller item index.
struct RankingResult {
  int k = 0;
  ScoreMode mode = ScoreMode::TE;
  double c = 0.0;
  std::vector<std::uint32_t> users;
  std::vector<std::vector<std::uint32_t>> lists;  // aligned with users
};

/// Score every non-excluded item per user (fused scores in TE mode,
/// counterfactual scores with constant c in TIE mode) and keep the top K.
/// Parallel over users; per-user results are thread-count independent.
RankingResult rank_all_items(const MacrModel& model, std::optional<double> c,
                             const std::vector<std::uint32_t>& users,
                             const std::vector<std::vector<std::uint32_t>>& excluded,
                             int k);

/// Single-threaded reference implementation, kept for kernel-agreement tests
/// and the benchmark baseline.
RankingResult rank_all_items_serial(const MacrModel& model, std::optional<double> c,
                                    const std::vector<std::uint32_t>& users,
                                    const std::vector<std::vector<std::uint32_t>>& excluded,
                                    int k);

/// Per-user relevant items, indexed by user. Users with no entries are
/// skipped by every metric.
std::vector<std::vector<std::uint32_t>> test_items_by_user(const std::vector<Interaction>& test,
                                                           std::size_t n_users);

double hr_at_k(const RankingResult& result,
               const std::vector<std::vector<std::uint32_t>>& test, int k);
double recall_at_k(const RankingResult& result,
                   const std::vector<std::vector<std::uint32_t>>& test, int k);
double ndcg_at_k(const RankingResult& result,
                 const std::vector<std::vector<std::uint32_t>>& test, int k);

struct MetricReport {
  std::vector<int> ks;
  std::vector<double> hr, recall, ndcg;  // aligned with ks
  std::size_t users_evaluated = 0;
  double at(Metric metric, int k) const;
};

enum class EvalTarget { Valid, Test };

/// All-ranking evaluation: candidate set is every item minus the user's train
/// positives (minus valid positives too when scoring test). Users without
/// relevant items are skipped.
MetricReport evaluate(const MacrModel& model, const DatasetSplit& split, EvalTarget target,
                      ScoreMode mode, double c, const std::vector<int>& ks);

void save_metric_csv(const MetricReport& report, const std::string& path);
void save_metric_json(const MetricReport& report, const std::string& path);

/// Group id -> aggregate value rows; NaN marks groups whose aggregate is
/// undefined (empty group or no test occurrences).
struct GroupAnalysis {
  std::string quantity;
  std::vector<int> group_ids;
  std::vector<std::size_t> group_sizes;
  std::vector<double> values;
};

/// Mean number of appearances in all users' top-K lists, per popularity group.
GroupAnalysis analyze_recommendation_frequency(const RankingResult& result,
                                               const PopularityProfile& profile);

/// Per-item recall (hits among the item's test occurrences), averaged within
/// groups; items without test occurrences are excluded from their group mean.
GroupAnalysis analyze_group_recall(const RankingResult& result,
                                   const std::vector<std::vector<std::uint32_t>>& test,
                                   const PopularityProfile& profile);

enum class Branch { User, Item };

/// Mean sigma(branch score) per group of a user-activity or item-popularity
/// profile.
GroupAnalysis analyze_branch_activation(const MacrModel& model, const PopularityProfile& profile,
                                        Branch branch);

void save_group_csv(const GroupAnalysis& analysis, const std::string& path);

/// Spearman rank correlation with average ranks for ties; NaN-valued pairs
/// are dropped.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace macr
