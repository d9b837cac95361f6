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
#include "macr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "macr/error.hpp"
#include "macr/trainer.hpp"

namespace macr {

std::string to_string(ScoreMode mode) { return mode == ScoreMode::TE ? "te" : "tie"; }

ScoreMode score_mode_from_string(const std::string& name) {
  if (name == "te") return ScoreMode::TE;
  if (name == "tie") return ScoreMode::TIE;
  throw UsageError("unknown score mode: " + name);
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::HR: return "hr";
    case Metric::Recall: return "recall";
    case Metric::NDCG: return "ndcg";
  }
  return "hr";
}

Metric metric_from_string(const std::string& name) {
  if (name == "hr") return Metric::HR;
  if (name == "recall") return Metric::Recall;
  if (name == "ndcg") return Metric::NDCG;
  throw UsageError("unknown metric: " + name);
}

namespace {

RankingResult rank_impl(const MacrModel& model, std::optional<double> c,
                        const std::vector<std::uint32_t>& users,
                        const std::vector<std::vector<std::uint32_t>>& excluded, int k,
                        bool parallel) {
  if (k < 1) throw UsageError("rank_all_items needs K >= 1");
  if (excluded.size() != users.size())
    throw UsageError("rank_all_items: one excluded set per user required");

  const auto& mu = model.match_users();
  const auto& mi = model.match_items();
  const std::size_t d = model.dim();
  const std::size_t n_items = model.n_items();

  // Branch multipliers do not depend on the candidate user/item pair.
  std::vector<double> item_mult(n_items);
  for (std::size_t i = 0; i < n_items; ++i)
    item_mult[i] = model.item_multiplier(static_cast<std::uint32_t>(i));

  RankingResult result;
  result.k = k;
  result.mode = c.has_value() ? ScoreMode::TIE : ScoreMode::TE;
  result.c = c.value_or(0.0);
  result.users = users;
  result.lists.resize(users.size());
  const double cval = result.c;

  std::vector<int> failed(users.size(), 0);
  const auto n = static_cast<std::int64_t>(users.size());
#pragma omp parallel if (parallel)
  {
    std::vector<std::uint8_t> mask(n_items, 0);
    std::vector<std::pair<double, std::uint32_t>> cand;
    cand.reserve(n_items);
#pragma omp for schedule(dynamic, 16)
    for (std::int64_t idx = 0; idx < n; ++idx) {
      const std::uint32_t u = users[idx];
      for (std::uint32_t i : excluded[idx]) mask[i] = 1;
      const double user_mult = model.user_multiplier(u);
      const double* eu = mu.row(u);

      cand.clear();
      for (std::size_t i = 0; i < n_items; ++i) {
        if (mask[i]) continue;
        const double y_k = mf_match_score(eu, mi.row(i), d);
        const double score = (y_k - cval) * item_mult[i] * user_mult;
        cand.emplace_back(score, static_cast<std::uint32_t>(i));
      }
      for (std::uint32_t i : excluded[idx]) mask[i] = 0;
      if (cand.empty()) {
        failed[idx] = 1;
        continue;
      }

      const auto top = std::min<std::size_t>(k, cand.size());
      std::partial_sort(cand.begin(), cand.begin() + top, cand.end(),
                        [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                        });
      auto& list = result.lists[idx];
      list.resize(top);
      for (std::size_t r = 0; r < top; ++r) list[r] = cand[r].second;
    }
  }
  for (std::size_t idx = 0; idx < users.size(); ++idx)
    if (failed[idx])
      throw DataError("user " + std::to_string(users[idx]) + " has every item excluded");
  return result;
}

}  // namespace

RankingResult rank_all_items(const MacrModel& model, std::optional<double> c,
                             const std::vector<std::uint32_t>& users,
                             const std::vector<std::vector<std::uint32_t>>& excluded, int k) {
  return rank_impl(model, c, users, excluded, k, true);
}

RankingResult rank_all_items_serial(const MacrModel& model, std::optional<double> c,
                                    const std::vector<std::uint32_t>& users,
                                    const std::vector<std::vector<std::uint32_t>>& excluded,
                                    int k) {
  return rank_impl(model, c, users, excluded, k, false);
}

std::vector<std::vector<std::uint32_t>> test_items_by_user(const std::vector<Interaction>& test,
                                                           std::size_t n_users) {
  std::vector<std::vector<std::uint32_t>> by_user(n_users);
  for (const auto& p : test) {
    if (p.user >= n_users) throw UsageError("test interaction user out of range");
    by_user[p.user].push_back(p.item);
  }
  for (auto& items : by_user) std::sort(items.begin(), items.end());
  return by_user;
}

namespace {

template <typename PerUser>
double mean_over_test_users(const RankingResult& result,
                            const std::vector<std::vector<std::uint32_t>>& test, int k,
                            PerUser&& per_user) {
  if (k < 1 || k > result.k) throw UsageError("metric K must be in [1, result K]");
  double acc = 0.0;
  std::size_t counted = 0;
  for (std::size_t idx = 0; idx < result.users.size(); ++idx) {
    const std::uint32_t u = result.users[idx];
    if (u >= test.size() || test[u].empty()) continue;
    acc += per_user(result.lists[idx], test[u]);
    ++counted;
  }
  if (counted == 0) throw UsageError("metric over zero test users");
  return acc / static_cast<double>(counted);
}

bool is_hit(const std::vector<std::uint32_t>& sorted_test, std::uint32_t item) {
  return std::binary_search(sorted_test.begin(), sorted_test.end(), item);
}

}  // namespace

double hr_at_k(const RankingResult& result,
               const std::vector<std::vector<std::uint32_t>>& test, int k) {
  return mean_over_test_users(result, test, k,
                              [&](const std::vector<std::uint32_t>& list,
                                  const std::vector<std::uint32_t>& test_u) {
                                const auto top = std::min<std::size_t>(k, list.size());
                                for (std::size_t r = 0; r < top; ++r)
                                  if (is_hit(test_u, list[r])) return 1.0;
                                return 0.0;
                              });
}

double recall_at_k(const RankingResult& result,
                   const std::vector<std::vector<std::uint32_t>>& test, int k) {
  return mean_over_test_users(result, test, k,
                              [&](const std::vector<std::uint32_t>& list,
                                  const std::vector<std::uint32_t>& test_u) {
                                const auto top = std::min<std::size_t>(k, list.size());
                                std::size_t hits = 0;
                                for (std::size_t r = 0; r < top; ++r)
                                  if (is_hit(test_u, list[r])) ++hits;
                                return static_cast<double>(hits) /
                                       static_cast<double>(test_u.size());
                              });
}

double ndcg_at_k(const RankingResult& result,
                 const std::vector<std::vector<std::uint32_t>>& test, int k) {
  return mean_over_test_users(
      result, test, k,
      [&](const std::vector<std::uint32_t>& list, const std::vector<std::uint32_t>& test_u) {
        const auto top = std::min<std::size_t>(k, list.size());
        double dcg = 0.0;
        for (std::size_t r = 0; r < top; ++r)
          if (is_hit(test_u, list[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        const auto ideal = std::min<std::size_t>(test_u.size(), k);
        double idcg = 0.0;
        for (std::size_t r = 0; r < ideal; ++r)
          idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
        return idcg > 0.0 ? dcg / idcg : 0.0;
      });
}

double MetricReport::at(Metric metric, int k) const {
  for (std::size_t idx = 0; idx < ks.size(); ++idx) {
    if (ks[idx] != k) continue;
    switch (metric) {
      case Metric::HR: return hr[idx];
      case Metric::Recall: return recall[idx];
      case Metric::NDCG: return ndcg[idx];
    }
  }
  throw UsageError("metric report has no K=" + std::to_string(k));
}

MetricReport evaluate(const MacrModel& model, const DatasetSplit& split, EvalTarget target,
                      ScoreMode mode, double c, const std::vector<int>& ks) {
  if (ks.empty()) throw UsageError("evaluate needs at least one K");
  const auto& holdout = target == EvalTarget::Test ? split.test : split.valid;
  const auto test = test_items_by_user(holdout, split.n_users);

  std::vector<std::uint32_t> users;
  for (std::size_t u = 0; u < split.n_users; ++u)
    if (!test[u].empty()) users.push_back(static_cast<std::uint32_t>(u));
  if (users.empty()) throw DataError("no users with holdout interactions to evaluate");

  // Candidate set: all items minus train positives, minus valid positives
  // when scoring test.
  std::vector<std::vector<std::uint32_t>> excluded(users.size());
  std::vector<std::vector<std::uint32_t>> valid_by_user;
  if (target == EvalTarget::Test) valid_by_user = test_items_by_user(split.valid, split.n_users);
  for (std::size_t idx = 0; idx < users.size(); ++idx) {
    const std::uint32_t u = users[idx];
    excluded[idx] = split.train.user_items[u];
    if (target == EvalTarget::Test && !valid_by_user[u].empty()) {
      excluded[idx].insert(excluded[idx].end(), valid_by_user[u].begin(), valid_by_user[u].end());
      std::sort(excluded[idx].begin(), excluded[idx].end());
      excluded[idx].erase(std::unique(excluded[idx].begin(), excluded[idx].end()),
                          excluded[idx].end());
    }
  }

  const int k_max = *std::max_element(ks.begin(), ks.end());
  const auto ranking =
      rank_all_items(model, mode == ScoreMode::TIE ? std::optional<double>(c) : std::nullopt,
                     users, excluded, k_max);

  MetricReport report;
  report.ks = ks;
  report.users_evaluated = users.size();
  for (int k : ks) {
    report.hr.push_back(hr_at_k(ranking, test, k));
    report.recall.push_back(recall_at_k(ranking, test, k));
    report.ndcg.push_back(ndcg_at_k(ranking, test, k));
  }
  return report;
}

void save_metric_csv(const MetricReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics: " + path);
  out << "k,hr,recall,ndcg,users_evaluated\n";
  char buf[160];
  for (std::size_t idx = 0; idx < report.ks.size(); ++idx) {
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%zu\n", report.ks[idx],
                  report.hr[idx], report.recall[idx], report.ndcg[idx],
                  report.users_evaluated);
    out << buf;
  }
}

void save_metric_json(const MetricReport& report, const std::string& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t idx = 0; idx < report.ks.size(); ++idx)
    rows.push_back({{"k", report.ks[idx]},
                    {"hr", report.hr[idx]},
                    {"recall", report.recall[idx]},
                    {"ndcg", report.ndcg[idx]}});
  nlohmann::json doc = {{"users_evaluated", report.users_evaluated}, {"metrics", rows}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write metrics: " + path);
  out << doc.dump(2) << '\n';
}

GroupAnalysis analyze_recommendation_frequency(const RankingResult& result,
                                               const PopularityProfile& profile) {
  std::vector<double> freq(profile.group_of_item.size(), 0.0);
  for (const auto& list : result.lists)
    for (std::uint32_t i : list) {
      if (i >= freq.size()) throw UsageError("ranking refers to an item outside the profile");
      freq[i] += 1.0;
    }

  GroupAnalysis analysis;
  analysis.quantity = "recommendation_frequency";
  std::vector<double> sums(profile.n_groups, 0.0);
  std::vector<std::size_t> sizes(profile.n_groups, 0);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    sums[profile.group_of_item[i]] += freq[i];
    ++sizes[profile.group_of_item[i]];
  }
  for (int g = 0; g < profile.n_groups; ++g) {
    analysis.group_ids.push_back(g);
    analysis.group_sizes.push_back(sizes[g]);
    analysis.values.push_back(sizes[g] > 0 ? sums[g] / static_cast<double>(sizes[g])
                                           : std::nan(""));
  }
  return analysis;
}

GroupAnalysis analyze_group_recall(const RankingResult& result,
                                   const std::vector<std::vector<std::uint32_t>>& test,
                                   const PopularityProfile& profile) {
  const std::size_t n_items = profile.group_of_item.size();
  std::vector<std::uint32_t> occurrences(n_items, 0), hits(n_items, 0);
  for (std::size_t idx = 0; idx < result.users.size(); ++idx) {
    const std::uint32_t u = result.users[idx];
    if (u >= test.size()) continue;
    for (std::uint32_t i : test[u]) ++occurrences[i];
    const auto& list = result.lists[idx];
    for (std::uint32_t i : list)
      if (is_hit(test[u], i)) ++hits[i];
  }

  GroupAnalysis analysis;
  analysis.quantity = "item_recall";
  std::vector<double> sums(profile.n_groups, 0.0);
  std::vector<std::size_t> counted(profile.n_groups, 0), sizes(profile.n_groups, 0);
  for (std::size_t i = 0; i < n_items; ++i) {
    ++sizes[profile.group_of_item[i]];
    if (occurrences[i] == 0) continue;  // recall undefined for this item
    sums[profile.group_of_item[i]] +=
        static_cast<double>(hits[i]) / static_cast<double>(occurrences[i]);
    ++counted[profile.group_of_item[i]];
  }
  for (int g = 0; g < profile.n_groups; ++g) {
    analysis.group_ids.push_back(g);
    analysis.group_sizes.push_back(sizes[g]);
    analysis.values.push_back(counted[g] > 0 ? sums[g] / static_cast<double>(counted[g])
                                             : std::nan(""));
  }
  return analysis;
}

GroupAnalysis analyze_branch_activation(const MacrModel& model, const PopularityProfile& profile,
                                        Branch branch) {
  const std::size_t n = profile.group_of_item.size();
  if (branch == Branch::User && n != model.n_users())
    throw UsageError("user-branch activation needs a user-activity profile");
  if (branch == Branch::Item && n != model.n_items())
    throw UsageError("item-branch activation needs an item-popularity profile");

  GroupAnalysis analysis;
  analysis.quantity = branch == Branch::User ? "mean_sigma_user" : "mean_sigma_item";
  std::vector<double> sums(profile.n_groups, 0.0);
  std::vector<std::size_t> sizes(profile.n_groups, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const double score = branch == Branch::User
                             ? model.branch_score_user(static_cast<std::uint32_t>(r))
                             : model.branch_score_item(static_cast<std::uint32_t>(r));
    sums[profile.group_of_item[r]] += sigmoid(score);
    ++sizes[profile.group_of_item[r]];
  }
  for (int g = 0; g < profile.n_groups; ++g) {
    analysis.group_ids.push_back(g);
    analysis.group_sizes.push_back(sizes[g]);
    analysis.values.push_back(sizes[g] > 0 ? sums[g] / static_cast<double>(sizes[g])
                                           : std::nan(""));
  }
  return analysis;
}

void save_group_csv(const GroupAnalysis& analysis, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write group analysis: " + path);
  out << "group,size," << analysis.quantity << "\n";
  char buf[128];
  for (std::size_t idx = 0; idx < analysis.group_ids.size(); ++idx) {
    std::snprintf(buf, sizeof(buf), "%d,%zu,%.10g\n", analysis.group_ids[idx],
                  analysis.group_sizes[idx], analysis.values[idx]);
    out << buf;
  }
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw UsageError("spearman: length mismatch");
  std::vector<double> xv, yv;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (std::isnan(xs[k]) || std::isnan(ys[k])) continue;
    xv.push_back(xs[k]);
    yv.push_back(ys[k]);
  }
  if (xv.size() < 2) throw UsageError("spearman: need at least two valid pairs");
  const auto rx = average_ranks(xv);
  const auto ry = average_ranks(yv);
  const double n = static_cast<double>(rx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    mx += rx[k];
    my += ry[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < rx.size(); ++k) {
    sxy += (rx[k] - mx) * (ry[k] - my);
    sxx += (rx[k] - mx) * (rx[k] - mx);
    syy += (ry[k] - my) * (ry[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace macr
