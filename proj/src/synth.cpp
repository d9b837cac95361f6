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
#include "macr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "macr/error.hpp"
#include "macr/rng.hpp"

namespace macr {

InteractionDataset generate_synthetic(const SynthSpec& spec, SynthDebug* debug) {
  const std::size_t n = spec.n_users, m = spec.n_items, r = spec.latent_dim;
  if (n < 2 || m < 2) throw UsageError("synthetic data needs >= 2 users and >= 2 items");
  if (spec.n_interactions < std::max(n, m))
    throw UsageError("need at least max(n_users, n_items) interactions");
  if (spec.n_interactions > n * (m - 1))
    throw UsageError("too many interactions for the user/item grid");

  Rng rng(Rng::derive(spec.rng_seed, 1));

  // Item exposure marginal: Zipf over a random permutation of ranks blended
  // with a uniform floor, materialized as exact per-item interaction counts.
  std::vector<double> share(m);
  {
    std::vector<std::uint32_t> rank(m);
    std::iota(rank.begin(), rank.end(), 0);
    for (std::size_t i = m; i > 1; --i)
      std::swap(rank[i - 1], rank[rng.uniform_index(i)]);
    double zsum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      share[i] = std::pow(static_cast<double>(rank[i]) + 1.0 + spec.pop_offset,
                          -spec.pop_exponent);
      zsum += share[i];
    }
    for (std::size_t i = 0; i < m; ++i)
      share[i] = (1.0 - spec.pop_uniform_mix) * share[i] / zsum +
                 spec.pop_uniform_mix / static_cast<double>(m);
  }
  const std::size_t user_cap = std::max<std::size_t>(8, m / 2);
  std::vector<std::size_t> item_quota(m);
  {
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < m; ++i) {
      item_quota[i] = std::max<std::size_t>(
          1, static_cast<std::size_t>(share[i] * static_cast<double>(spec.n_interactions)));
      item_quota[i] = std::min(item_quota[i], n - 1);
      assigned += item_quota[i];
    }
    std::vector<std::uint32_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (item_quota[a] != item_quota[b]) return item_quota[a] > item_quota[b];
      return a < b;
    });
    std::size_t cursor = 0;
    while (assigned < spec.n_interactions) {
      const std::uint32_t i = order[cursor % m];
      if (item_quota[i] < n - 1) {
        ++item_quota[i];
        ++assigned;
      }
      ++cursor;
    }
    cursor = 0;
    while (assigned > spec.n_interactions) {
      const std::uint32_t i = order[cursor % m];
      if (item_quota[i] > 1) {
        --item_quota[i];
        --assigned;
      }
      ++cursor;
    }
  }

  // Latent structure: low-rank preferences, log-normal activity, and a
  // per-user conformity deviation that couples users to item popularity.
  std::vector<double> item_factors(m * r), user_factors(n * r);
  for (auto& v : item_factors) v = rng.normal();
  for (auto& v : user_factors) v = rng.normal();
  std::vector<double> conformity(n), log_activity(n);
  for (auto& v : conformity) v = spec.conformity_sigma * rng.normal();
  // Clamped so no single user can dominate every item's draw.
  for (auto& v : log_activity)
    v = std::clamp(spec.activity_sigma * rng.normal(), -2.5, 2.5);

  std::vector<double> pop_z(m);
  {
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      pop_z[i] = std::log(share[i]);
      mean += pop_z[i];
    }
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (pop_z[i] - mean) * (pop_z[i] - mean);
    const double inv_std = var > 0.0 ? 1.0 / std::sqrt(var / static_cast<double>(m)) : 0.0;
    for (std::size_t i = 0; i < m; ++i) pop_z[i] = (pop_z[i] - mean) * inv_std;
  }

  if (debug) {
    debug->user_factors = user_factors;
    debug->item_factors = item_factors;
    debug->log_pop = pop_z;
    debug->conformity = conformity;
  }

  // For each item draw its quota of distinct users: Gumbel top-k over
  //   log a_u + kappa <p_u, q_i> / sqrt(r) + gamma_u * popz_i.
  const double inv_sqrt_r = 1.0 / std::sqrt(static_cast<double>(r));
  std::vector<Interaction> pairs;
  pairs.reserve(spec.n_interactions);
  std::vector<std::size_t> user_count(n, 0);
  std::vector<std::pair<double, std::uint32_t>> keyed(n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* qi = item_factors.data() + i * r;
    for (std::size_t u = 0; u < n; ++u) {
      const double* pu = user_factors.data() + u * r;
      double dot = 0.0;
      for (std::size_t k = 0; k < r; ++k) dot += pu[k] * qi[k];
      const double logit = log_activity[u] + spec.affinity_scale * dot * inv_sqrt_r +
                           conformity[u] * pop_z[i];
      double unif = rng.uniform_real();
      while (unif <= 0.0) unif = rng.uniform_real();
      keyed[u] = {logit - std::log(-std::log(unif)), static_cast<std::uint32_t>(u)};
    }
    std::partial_sort(keyed.begin(), keyed.begin() + item_quota[i], keyed.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t t = 0; t < item_quota[i]; ++t) {
      pairs.push_back({keyed[t].second, static_cast<std::uint32_t>(i)});
      ++user_count[keyed[t].second];
    }
  }

  // Cover users that drew nothing by reassigning slots from the busiest
  // users; per-user caps hold so negative sampling stays feasible.
  for (std::uint32_t u = 0; u < n; ++u) {
    if (user_count[u] > 0) continue;
    for (std::size_t attempt = 0; attempt < pairs.size(); ++attempt) {
      auto& p = pairs[rng.uniform_index(pairs.size())];
      if (user_count[p.user] < 2) continue;
      bool dup = false;
      for (const auto& q : pairs)
        if (q.user == u && q.item == p.item) {
          dup = true;
          break;
        }
      if (dup) continue;
      --user_count[p.user];
      p.user = u;
      ++user_count[u];
      break;
    }
    if (user_count[u] == 0) throw NumericalError("could not cover user " + std::to_string(u));
  }
  for (std::size_t u = 0; u < n; ++u)
    if (user_count[u] >= user_cap * 2 && user_count[u] + 1 >= m)
      throw NumericalError("user " + std::to_string(u) + " saturated the item set");

  return InteractionDataset::from_pairs(n, m, std::move(pairs));
}

void save_interactions(const InteractionDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write interactions: " + path);
  for (const auto& p : data.positives) out << p.user << '\t' << p.item << '\n';
}

}  // namespace macr
