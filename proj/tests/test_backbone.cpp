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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "macr/backbone.hpp"
#include "macr/error.hpp"
#include "macr/model.hpp"
#include "macr/rng.hpp"
#include "test_util.hpp"

using namespace macr;
using macr::testing::random_dataset;

TEST_CASE("xavier_init stays within the uniform bound and is deterministic") {
  const std::size_t rows = 1345, dim = 64;
  const auto table = xavier_init(rows, dim, 11);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + dim));
  for (double v : table.values) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
  const auto again = xavier_init(rows, dim, 11);
  CHECK(again.values == table.values);
  const auto other = xavier_init(rows, dim, 12);
  CHECK(other.values != table.values);
}

TEST_CASE("xavier_init sample variance matches the uniform law") {
  const std::size_t rows = 10000, dim = 100;  // one million draws
  const auto table = xavier_init(rows, dim, 3);
  double mean = 0.0;
  for (double v : table.values) mean += v;
  mean /= static_cast<double>(table.values.size());
  double var = 0.0;
  for (double v : table.values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(table.values.size());
  const double expected = 2.0 / static_cast<double>(rows + dim);
  CHECK(var == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("mf_match_score is the inner product") {
  CHECK(mf_match_score({1.0, 0.0}, {0.0, 1.0}) == 0.0);
  CHECK(mf_match_score({1.0, 1.0}, {1.0, 1.0}) == 2.0);
  CHECK_THROWS_AS(mf_match_score({1.0}, {1.0, 2.0}), UsageError);

  Rng rng(4);
  std::vector<double> a(64), b(64);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  double oracle = 0.0;
  for (std::size_t k = 0; k < 64; ++k) {
    const double prod = a[k] * b[k];  // element-wise product, then a sum
    oracle += prod;
  }
  CHECK(mf_match_score(a, b) == oracle);
}

TEST_CASE("normalized adjacency matches degrees and weights") {
  const auto data = random_dataset(12, 7, 40, 8);
  const auto adj = NormalizedAdjacency::build(data);
  for (std::size_t u = 0; u < data.n_users; ++u)
    CHECK(adj.degree_u[u] == data.user_items[u].size());
  for (std::size_t i = 0; i < data.n_items; ++i)
    CHECK(adj.degree_i[i] == data.item_users[i].size());
  for (std::size_t u = 0; u < data.n_users; ++u)
    for (std::size_t e = adj.user_offsets[u]; e < adj.user_offsets[u + 1]; ++e) {
      const std::uint32_t i = adj.user_nbrs[e];
      const double expected = 1.0 / std::sqrt(static_cast<double>(adj.degree_u[u]) *
                                              static_cast<double>(adj.degree_i[i]));
      CHECK(adj.user_wts[e] == expected);
      CHECK(adj.user_wts[e] > 0.0);
    }
}

namespace {

std::pair<EmbeddingTable, EmbeddingTable> tiny_tables(std::size_t n_users, std::size_t n_items,
                                                      std::size_t dim, std::uint64_t seed) {
  return {xavier_init(n_users, dim, seed), xavier_init(n_items, dim, seed + 1)};
}

}  // namespace

TEST_CASE("single-edge propagation is a fixed point") {
  std::vector<Interaction> pairs = {{0, 0}};
  const auto data = InteractionDataset::from_pairs(1, 1, std::move(pairs));
  const auto adj = NormalizedAdjacency::build(data);
  EmbeddingTable users(1, 1), items(1, 1);
  users.values[0] = 1.0;
  items.values[0] = 1.0;
  EmbeddingTable uo, io;
  lightgcn_propagate(users, items, adj, 1, uo, io);
  CHECK(uo.values[0] == 1.0);
  CHECK(io.values[0] == 1.0);
}

TEST_CASE("zero layers is the identity") {
  const auto data = random_dataset(6, 4, 10, 2);
  const auto adj = NormalizedAdjacency::build(data);
  auto [users, items] = tiny_tables(6, 4, 5, 31);
  EmbeddingTable uo, io;
  lightgcn_propagate(users, items, adj, 0, uo, io);
  CHECK(uo.values == users.values);
  CHECK(io.values == items.values);
}

TEST_CASE("two-user star propagates the normalized sum") {
  std::vector<Interaction> pairs = {{0, 0}, {1, 0}};
  const auto data = InteractionDataset::from_pairs(2, 1, std::move(pairs));
  const auto adj = NormalizedAdjacency::build(data);
  EmbeddingTable users(2, 1), items(1, 1);
  users.values = {1.0, 1.0};
  items.values = {1.0};
  EmbeddingTable uo, io;
  lightgcn_propagate(users, items, adj, 1, uo, io);
  // Item layer-1 value is 2/sqrt(2) = sqrt(2); output is the layer mean.
  CHECK(io.values[0] == doctest::Approx((1.0 + std::sqrt(2.0)) / 2.0).epsilon(1e-15));
  CHECK(uo.values[0] == doctest::Approx((1.0 + 1.0 / std::sqrt(2.0)) / 2.0).epsilon(1e-15));
}

TEST_CASE("propagation is exactly linear under power-of-two scaling") {
  const auto data = random_dataset(9, 6, 25, 12);
  const auto adj = NormalizedAdjacency::build(data);
  auto [users, items] = tiny_tables(9, 6, 4, 77);
  EmbeddingTable uo, io;
  lightgcn_propagate(users, items, adj, 2, uo, io);

  auto scaled_u = users, scaled_i = items;
  for (auto& v : scaled_u.values) v *= 2.0;
  for (auto& v : scaled_i.values) v *= 2.0;
  EmbeddingTable uo2, io2;
  lightgcn_propagate(scaled_u, scaled_i, adj, 2, uo2, io2);
  for (std::size_t k = 0; k < uo.values.size(); ++k) CHECK(uo2.values[k] == 2.0 * uo.values[k]);
  for (std::size_t k = 0; k < io.values.size(); ++k) CHECK(io2.values[k] == 2.0 * io.values[k]);
}

TEST_CASE("perfect matching with equal endpoint embeddings is a fixed point") {
  std::vector<Interaction> pairs;
  for (std::uint32_t k = 0; k < 8; ++k) pairs.push_back({k, k});
  const auto data = InteractionDataset::from_pairs(8, 8, std::move(pairs));
  const auto adj = NormalizedAdjacency::build(data);
  auto users = xavier_init(8, 3, 5);
  auto items = users;  // e_u = e_i per edge
  EmbeddingTable uo, io;
  lightgcn_propagate(users, items, adj, 1, uo, io);
  CHECK(uo.values == users.values);
  CHECK(io.values == items.values);
}

TEST_CASE("zero-degree nodes keep their layer-0 embedding through the mean") {
  // Item 1 has no interactions.
  std::vector<Interaction> pairs = {{0, 0}, {1, 0}};
  const auto data = InteractionDataset::from_pairs(2, 2, std::move(pairs));
  const auto adj = NormalizedAdjacency::build(data);
  EmbeddingTable users(2, 1), items(2, 1);
  users.values = {0.5, 0.25};
  items.values = {1.0, 3.0};
  EmbeddingTable uo, io;
  lightgcn_propagate(users, items, adj, 1, uo, io);
  CHECK(io.values[1] == 3.0 / 2.0);  // mean(3, 0): propagation contributes zero
  CHECK(std::isfinite(io.values[1]));
}

namespace {

// Dense oracle: build the symmetric (n+m)x(n+m) normalized operator and
// average explicit matrix powers applied to the stacked embeddings.
void dense_propagate(const InteractionDataset& data, const EmbeddingTable& users,
                     const EmbeddingTable& items, int layers, EmbeddingTable& uo,
                     EmbeddingTable& io) {
  const std::size_t n = data.n_users, m = data.n_items, d = users.dim, t = n + m;
  std::vector<double> op(t * t, 0.0);
  for (const auto& p : data.positives) {
    const double w = 1.0 / std::sqrt(static_cast<double>(data.user_items[p.user].size()) *
                                     static_cast<double>(data.item_users[p.item].size()));
    op[p.user * t + (n + p.item)] = w;
    op[(n + p.item) * t + p.user] = w;
  }
  std::vector<double> cur(t * d, 0.0), next(t * d, 0.0), acc(t * d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k) cur[r * d + k] = users.values[r * d + k];
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < d; ++k) cur[(n + r) * d + k] = items.values[r * d + k];
  acc = cur;
  for (int l = 0; l < layers; ++l) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t a = 0; a < t; ++a)
      for (std::size_t b = 0; b < t; ++b) {
        const double w = op[a * t + b];
        if (w == 0.0) continue;
        for (std::size_t k = 0; k < d; ++k) next[a * d + k] += w * cur[b * d + k];
      }
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += next[k];
    std::swap(cur, next);
  }
  const double inv = 1.0 / (layers + 1);
  uo = EmbeddingTable(n, d);
  io = EmbeddingTable(m, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < d; ++k) uo.values[r * d + k] = acc[r * d + k] * inv;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < d; ++k) io.values[r * d + k] = acc[(n + r) * d + k] * inv;
}

}  // namespace

TEST_CASE("sparse propagation agrees with the dense oracle") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto data = random_dataset(40, 30, 200, seed);
    auto [users, items] = tiny_tables(40, 30, 6, seed * 13 + 1);
    EmbeddingTable uo, io, uo_ref, io_ref;
    lightgcn_propagate(users, items, NormalizedAdjacency::build(data), 3, uo, io);
    dense_propagate(data, users, items, 3, uo_ref, io_ref);
    for (std::size_t k = 0; k < uo.values.size(); ++k)
      CHECK(uo.values[k] == doctest::Approx(uo_ref.values[k]).epsilon(1e-10));
    for (std::size_t k = 0; k < io.values.size(); ++k)
      CHECK(io.values[k] == doctest::Approx(io_ref.values[k]).epsilon(1e-10));
  }
}

TEST_CASE("parallel and serial propagation are bit-identical") {
  const auto data = random_dataset(60, 25, 400, 6);
  const auto adj = NormalizedAdjacency::build(data);
  auto [users, items] = tiny_tables(60, 25, 8, 91);
  EmbeddingTable uo_p, io_p, uo_s, io_s;
  lightgcn_propagate(users, items, adj, 2, uo_p, io_p);
  lightgcn_propagate_serial(users, items, adj, 2, uo_s, io_s);
  CHECK(uo_p.values == uo_s.values);
  CHECK(io_p.values == io_s.values);
}

TEST_CASE("model match_score: MF and reductions") {
  ModelInit init;
  init.dim = 2;
  init.rng_seed = 1;
  auto model = MacrModel::make(2, 2, init);
  model.user_emb.values = {1.0, 0.0, 0.5, 0.5};
  model.item_emb.values = {0.0, 1.0, 2.0, 0.0};
  CHECK(model.match_score(0, 0) == 0.0);  // orthogonal
  CHECK(model.match_score(0, 1) == 2.0);

  // LightGCN with zero layers reduces to MF on the same tables.
  ModelInit ginit;
  ginit.backbone = BackboneKind::LightGCN;
  ginit.gcn_layers = 0;
  ginit.dim = 2;
  ginit.rng_seed = 1;
  auto gmodel = MacrModel::make(2, 2, ginit);
  gmodel.user_emb.values = model.user_emb.values;
  gmodel.item_emb.values = model.item_emb.values;
  std::vector<Interaction> pairs = {{0, 0}, {1, 1}};
  const auto data = InteractionDataset::from_pairs(2, 2, std::move(pairs));
  gmodel.refresh_propagation(NormalizedAdjacency::build(data));
  CHECK(gmodel.match_score(0, 0) == model.match_score(0, 0));
  CHECK(gmodel.match_score(1, 1) == model.match_score(1, 1));
}

TEST_CASE("stale propagation cache is rejected") {
  const auto data = random_dataset(5, 4, 8, 3);
  ModelInit init;
  init.backbone = BackboneKind::LightGCN;
  init.dim = 3;
  init.rng_seed = 9;
  auto model = MacrModel::make(5, 4, init);
  CHECK_THROWS_AS(model.match_score(0, 0), StaleCacheError);  // never propagated
  model.refresh_propagation(NormalizedAdjacency::build(data));
  CHECK_NOTHROW(model.match_score(0, 0));
  model.mark_params_changed();
  CHECK_THROWS_AS(model.match_score(0, 0), StaleCacheError);
}

TEST_CASE("match_score checks index bounds") {
  ModelInit init;
  init.dim = 2;
  auto model = MacrModel::make(3, 3, init);
  CHECK_THROWS_AS(model.match_score(3, 0), UsageError);
  CHECK_THROWS_AS(model.branch_score_item(7), UsageError);
}
