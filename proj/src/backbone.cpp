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
#include "macr/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "macr/error.hpp"
#include "macr/rng.hpp"

namespace macr {

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::MF ? "mf" : "lightgcn";
}

BackboneKind backbone_from_string(const std::string& name) {
  if (name == "mf") return BackboneKind::MF;
  if (name == "lightgcn") return BackboneKind::LightGCN;
  throw UsageError("unknown backbone: " + name);
}

EmbeddingTable xavier_init(std::size_t rows, std::size_t dim, std::uint64_t rng_seed) {
  if (rows < 1 || dim < 1) throw UsageError("embedding table needs rows, dim >= 1");
  EmbeddingTable table(rows, dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + dim));
  Rng rng(rng_seed);
  for (auto& v : table.values) v = rng.uniform_in(-bound, bound);
  return table;
}

double mf_match_score(const double* e_user, const double* e_item, std::size_t dim) {
  double acc = 0.0;
  for (std::size_t k = 0; k < dim; ++k) acc += e_user[k] * e_item[k];
  return acc;
}

double mf_match_score(const std::vector<double>& e_user, const std::vector<double>& e_item) {
  if (e_user.size() != e_item.size())
    throw UsageError("embedding dimension mismatch in match score");
  return mf_match_score(e_user.data(), e_item.data(), e_user.size());
}

NormalizedAdjacency NormalizedAdjacency::build(const InteractionDataset& train) {
  NormalizedAdjacency adj;
  adj.n_users = train.n_users;
  adj.n_items = train.n_items;
  adj.degree_u.resize(train.n_users);
  adj.degree_i.resize(train.n_items);
  for (std::size_t u = 0; u < train.n_users; ++u)
    adj.degree_u[u] = static_cast<std::uint32_t>(train.user_items[u].size());
  for (std::size_t i = 0; i < train.n_items; ++i)
    adj.degree_i[i] = static_cast<std::uint32_t>(train.item_users[i].size());

  adj.user_offsets.resize(train.n_users + 1, 0);
  adj.item_offsets.resize(train.n_items + 1, 0);
  for (std::size_t u = 0; u < train.n_users; ++u)
    adj.user_offsets[u + 1] = adj.user_offsets[u] + adj.degree_u[u];
  for (std::size_t i = 0; i < train.n_items; ++i)
    adj.item_offsets[i + 1] = adj.item_offsets[i] + adj.degree_i[i];

  adj.user_nbrs.resize(train.n_positives());
  adj.user_wts.resize(train.n_positives());
  adj.item_nbrs.resize(train.n_positives());
  adj.item_wts.resize(train.n_positives());

  std::vector<std::size_t> ucur(adj.user_offsets.begin(), adj.user_offsets.end() - 1);
  std::vector<std::size_t> icur(adj.item_offsets.begin(), adj.item_offsets.end() - 1);
  for (const auto& p : train.positives) {
    const double w = 1.0 / std::sqrt(static_cast<double>(adj.degree_u[p.user]) *
                                     static_cast<double>(adj.degree_i[p.item]));
    adj.user_nbrs[ucur[p.user]] = p.item;
    adj.user_wts[ucur[p.user]] = w;
    ++ucur[p.user];
    adj.item_nbrs[icur[p.item]] = p.user;
    adj.item_wts[icur[p.item]] = w;
    ++icur[p.item];
  }
  return adj;
}

namespace {

// One propagation step: out_users[u] = sum_{i in N(u)} w * in_items[i],
// out_items[i] = sum_{u in N(i)} w * in_users[u]. Parallel over output rows,
// each row reduced sequentially, so results do not depend on thread count.
void propagate_step(const double* users_in, const double* items_in, std::size_t d,
                    const NormalizedAdjacency& adj, EmbeddingTable& users_out,
                    EmbeddingTable& items_out, bool parallel) {
  const auto nu = static_cast<std::int64_t>(adj.n_users);
  const auto ni = static_cast<std::int64_t>(adj.n_items);

#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t u = 0; u < nu; ++u) {
    double* out = users_out.row(static_cast<std::size_t>(u));
    for (std::size_t k = 0; k < d; ++k) out[k] = 0.0;
    for (std::size_t e = adj.user_offsets[u]; e < adj.user_offsets[u + 1]; ++e) {
      const double w = adj.user_wts[e];
      const double* src = items_in + static_cast<std::size_t>(adj.user_nbrs[e]) * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += w * src[k];
    }
  }

#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < ni; ++i) {
    double* out = items_out.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < d; ++k) out[k] = 0.0;
    for (std::size_t e = adj.item_offsets[i]; e < adj.item_offsets[i + 1]; ++e) {
      const double w = adj.item_wts[e];
      const double* src = users_in + static_cast<std::size_t>(adj.item_nbrs[e]) * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += w * src[k];
    }
  }
}

void resize_table(EmbeddingTable& table, std::size_t rows, std::size_t dim) {
  table.rows = rows;
  table.dim = dim;
  table.values.resize(rows * dim);
}

}  // namespace

void lightgcn_propagate_raw(const double* users_in, const double* items_in, std::size_t dim,
                            const NormalizedAdjacency& adj, int layers,
                            EmbeddingTable& users_out, EmbeddingTable& items_out,
                            PropagationWorkspace& ws, bool parallel) {
  if (layers < 0) throw UsageError("layers must be >= 0");

  // Accumulate the layer mean; layer 0 is the input itself.
  resize_table(users_out, adj.n_users, dim);
  resize_table(items_out, adj.n_items, dim);
  std::copy(users_in, users_in + adj.n_users * dim, users_out.values.begin());
  std::copy(items_in, items_in + adj.n_items * dim, items_out.values.begin());
  if (layers == 0) return;

  resize_table(ws.ucur, adj.n_users, dim);
  resize_table(ws.icur, adj.n_items, dim);
  resize_table(ws.unext, adj.n_users, dim);
  resize_table(ws.inext, adj.n_items, dim);
  std::copy(users_in, users_in + adj.n_users * dim, ws.ucur.values.begin());
  std::copy(items_in, items_in + adj.n_items * dim, ws.icur.values.begin());

  for (int l = 0; l < layers; ++l) {
    propagate_step(ws.ucur.values.data(), ws.icur.values.data(), dim, adj, ws.unext, ws.inext,
                   parallel);
    for (std::size_t k = 0; k < users_out.values.size(); ++k)
      users_out.values[k] += ws.unext.values[k];
    for (std::size_t k = 0; k < items_out.values.size(); ++k)
      items_out.values[k] += ws.inext.values[k];
    std::swap(ws.ucur, ws.unext);
    std::swap(ws.icur, ws.inext);
  }
  const double inv = 1.0 / (layers + 1);
  for (auto& v : users_out.values) v *= inv;
  for (auto& v : items_out.values) v *= inv;
}

namespace {

void propagate_tables(const EmbeddingTable& users_in, const EmbeddingTable& items_in,
                      const NormalizedAdjacency& adj, int layers,
                      EmbeddingTable& users_out, EmbeddingTable& items_out, bool parallel) {
  if (users_in.rows != adj.n_users || items_in.rows != adj.n_items)
    throw UsageError("embedding tables do not match adjacency shape");
  if (users_in.dim != items_in.dim) throw UsageError("user/item embedding dims differ");
  PropagationWorkspace ws;
  lightgcn_propagate_raw(users_in.values.data(), items_in.values.data(), users_in.dim, adj,
                         layers, users_out, items_out, ws, parallel);
}

}  // namespace

void lightgcn_propagate(const EmbeddingTable& users_in, const EmbeddingTable& items_in,
                        const NormalizedAdjacency& adj, int layers,
                        EmbeddingTable& users_out, EmbeddingTable& items_out) {
  propagate_tables(users_in, items_in, adj, layers, users_out, items_out, true);
}

void lightgcn_propagate_serial(const EmbeddingTable& users_in, const EmbeddingTable& items_in,
                               const NormalizedAdjacency& adj, int layers,
                               EmbeddingTable& users_out, EmbeddingTable& items_out) {
  propagate_tables(users_in, items_in, adj, layers, users_out, items_out, false);
}

}  // namespace macr
