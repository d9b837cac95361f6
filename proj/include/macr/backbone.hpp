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
#include <string>
#include <vector>

#include "macr/dataset.hpp"

namespace macr {

enum class BackboneKind { MF, LightGCN };

std::string to_string(BackboneKind kind);
BackboneKind backbone_from_string(const std::string& name);

/// Row-major rows x dim matrix of doubles.
struct EmbeddingTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows_, std::size_t dim_)
      : rows(rows_), dim(dim_), values(rows_ * dim_, 0.0) {}

  double* row(std::size_t r) { return values.data() + r * dim; }
  const double* row(std::size_t r) const { return values.data() + r * dim; }
};

/// Entries uniform in [-a, a], a = sqrt(6 / (rows + dim)). Deterministic per seed.
EmbeddingTable xavier_init(std::size_t rows, std::size_t dim, std::uint64_t rng_seed);

/// Inner product; K(u,i) is the element-wise product and the score its sum.
double mf_match_score(const double* e_user, const double* e_item, std::size_t dim);
double mf_match_score(const std::vector<double>& e_user, const std::vector<double>& e_item);

/// Bipartite train graph in CSR form (both directions) with symmetric
/// 1/sqrt(deg_u * deg_i) edge weights. No self loops.
struct NormalizedAdjacency {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<std::size_t> user_offsets;   // n_users + 1
  std::vector<std::uint32_t> user_nbrs;    // item indices
  std::vector<double> user_wts;
  std::vector<std::size_t> item_offsets;   // n_items + 1
  std::vector<std::uint32_t> item_nbrs;    // user indices
  std::vector<double> item_wts;
  std::vector<std::uint32_t> degree_u;
  std::vector<std::uint32_t> degree_i;

  static NormalizedAdjacency build(const InteractionDataset& train);
};

/// Reusable intermediate buffers for repeated propagation calls.
struct PropagationWorkspace {
  EmbeddingTable ucur, icur, unext, inext;
};

/// Layered neighborhood propagation: layer k+1 of a node is the weighted sum
/// of its neighbors' layer-k embeddings; the output is the arithmetic mean of
/// layers 0..layers. Zero-degree nodes keep their layer-0 embedding through
/// the mean. The operator is symmetric, so it is its own adjoint — the same
/// function backpropagates gradients.
void lightgcn_propagate(const EmbeddingTable& users_in, const EmbeddingTable& items_in,
                        const NormalizedAdjacency& adj, int layers,
                        EmbeddingTable& users_out, EmbeddingTable& items_out);

/// Single-threaded reference implementation; kept for the kernel-agreement
/// tests and the benchmark baseline. Bit-identical to the parallel kernel
/// (each output row is a fixed sequential reduction either way).
void lightgcn_propagate_serial(const EmbeddingTable& users_in, const EmbeddingTable& items_in,
                               const NormalizedAdjacency& adj, int layers,
                               EmbeddingTable& users_out, EmbeddingTable& items_out);

/// Allocation-free variant over raw row-major arrays; the trainer calls this
/// once per batch for the backward pass.
void lightgcn_propagate_raw(const double* users_in, const double* items_in, std::size_t dim,
                            const NormalizedAdjacency& adj, int layers,
                            EmbeddingTable& users_out, EmbeddingTable& items_out,
                            PropagationWorkspace& ws, bool parallel);

}  // namespace macr
