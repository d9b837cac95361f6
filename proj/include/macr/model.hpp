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
#include <string>
#include <vector>

#include "macr/backbone.hpp"
#include "macr/dataset.hpp"
#include "macr/rng.hpp"

namespace macr {

/// Numerically stable logistic function.
double sigmoid(double x);

/// Three-branch score fusion: y_k * sigma(y_i) * sigma(y_u).
double fuse_scores(double y_k, double y_i, double y_u);

/// Debiased inference score (y_k - c) * sigma(y_i) * sigma(y_u); with the
/// reference matching score as c this is the total indirect effect.
double counterfactual_score(double y_k, double y_i, double y_u, double c);

/// Mean binary cross-entropy over logits; log arguments clamped to >= 1e-12.
double bce_loss(std::span<const double> scores, std::span<const float> labels);

enum class HeadKind { Affine, Mlp };

std::string to_string(HeadKind kind);
HeadKind head_from_string(const std::string& name);

/// Scalar head over one embedding: an affine map, or a one-hidden-layer MLP
/// with tanh activation (hidden width defaults to the embedding dim).
struct BranchHead {
  HeadKind kind = HeadKind::Affine;
  std::size_t dim = 0;
  std::size_t hidden = 0;              // Mlp only
  std::vector<double> w1;              // Mlp: hidden x dim, row-major
  std::vector<double> b1;              // Mlp: hidden
  std::vector<double> w2;              // Affine: dim; Mlp: hidden
  double b2 = 0.0;

  static BranchHead make(HeadKind kind, std::size_t dim, std::size_t hidden, Rng& rng);
  double forward(const double* embedding) const;
  std::size_t n_params() const;
};

struct ModelInit {
  BackboneKind backbone = BackboneKind::MF;
  int gcn_layers = 2;
  std::size_t dim = 64;
  HeadKind head = HeadKind::Affine;
  std::size_t mlp_hidden = 0;          // 0 -> dim
  bool user_branch = true;
  bool item_branch = true;
  bool heads_use_propagated = false;
  bool item_bias = false;              // BS baseline term
  std::uint64_t rng_seed = 0;
};

/// Backbone embeddings plus the two branch heads. Propagated embeddings are
/// cached per parameter version; scoring under LightGCN with a stale cache
/// throws StaleCacheError.
struct MacrModel {
  BackboneKind backbone = BackboneKind::MF;
  int gcn_layers = 2;
  bool has_user_branch = true;
  bool has_item_branch = true;
  bool heads_use_propagated = false;

  EmbeddingTable user_emb;
  EmbeddingTable item_emb;
  BranchHead user_head;
  BranchHead item_head;
  std::vector<double> item_bias;       // empty unless the BS baseline is on

  EmbeddingTable user_prop;
  EmbeddingTable item_prop;
  std::uint64_t param_version = 0;
  std::uint64_t prop_version = static_cast<std::uint64_t>(-1);

  static MacrModel make(std::size_t n_users, std::size_t n_items, const ModelInit& init);

  std::size_t n_users() const { return user_emb.rows; }
  std::size_t n_items() const { return item_emb.rows; }
  std::size_t dim() const { return user_emb.dim; }

  void mark_params_changed() { ++param_version; }
  /// Recompute the LightGCN propagation cache for the current parameters.
  /// No-op for MF.
  void refresh_propagation(const NormalizedAdjacency& adj);

  /// Embedding tables the matching score reads (propagated under LightGCN).
  const EmbeddingTable& match_users() const;
  const EmbeddingTable& match_items() const;
  /// Embedding tables the branch heads read (layer 0 unless configured).
  const EmbeddingTable& branch_users() const;
  const EmbeddingTable& branch_items() const;

  /// Trainer path: mid-epoch batches intentionally score against the cache
  /// refreshed at epoch start, so these skip the freshness check.
  const EmbeddingTable& match_users_frozen() const {
    return backbone == BackboneKind::LightGCN ? user_prop : user_emb;
  }
  const EmbeddingTable& match_items_frozen() const {
    return backbone == BackboneKind::LightGCN ? item_prop : item_emb;
  }
  const EmbeddingTable& branch_users_frozen() const {
    return heads_use_propagated ? match_users_frozen() : user_emb;
  }
  const EmbeddingTable& branch_items_frozen() const {
    return heads_use_propagated ? match_items_frozen() : item_emb;
  }

  double match_score(std::uint32_t u, std::uint32_t i) const;
  double branch_score_user(std::uint32_t u) const;
  double branch_score_item(std::uint32_t i) const;

  /// sigma(branch score), or exactly 1 when that branch is disabled.
  double user_multiplier(std::uint32_t u) const;
  double item_multiplier(std::uint32_t i) const;

  /// Training-time fused score for (u, i).
  double fused_score(std::uint32_t u, std::uint32_t i) const;
  /// Inference-time counterfactual score with reference constant c.
  double tie_score(std::uint32_t u, std::uint32_t i, double c) const;
};

struct LossBreakdown {
  double total = 0.0;
  double l_o = 0.0;
  double l_i = 0.0;
  double l_u = 0.0;
};

/// L = L_O + alpha * L_I + beta * L_U, each a mean BCE over the batch; fused
/// scores feed L_O, the branch scores feed L_I / L_U. Disabled branches
/// contribute zero components.
LossBreakdown macr_loss(const MacrModel& model, std::span<const LabeledExample> batch,
                        double alpha, double beta);

/// Reference status: mean embeddings u*, i* and the scores they induce.
struct CausalReference {
  std::vector<double> user_mean_match;   // mean over match_users rows
  std::vector<double> item_mean_match;
  std::vector<double> user_mean_branch;  // mean over branch_users rows
  std::vector<double> item_mean_branch;
  double match_ref = 0.0;                // y_k(u*, i*)
  double user_branch_ref = 0.0;          // y_u(u*)
  double item_branch_ref = 0.0;          // y_i(i*)
};

CausalReference compute_reference(const MacrModel& model);

/// TE = Y(u, i, K_{u,i}) - Y(u*, i*, K_{u*,i*}).
double total_effect(const MacrModel& model, const CausalReference& ref,
                    std::uint32_t u, std::uint32_t i);

/// NDE = Y(u, i, K_{u*,i*}) - Y(u*, i*, K_{u*,i*}).
double natural_direct_effect(const MacrModel& model, const CausalReference& ref,
                             std::uint32_t u, std::uint32_t i);

/// TIE = TE - NDE = (y_k(u,i) - y_k(u*,i*)) * sigma(y_i) * sigma(y_u).
double total_indirect_effect(const MacrModel& model, const CausalReference& ref,
                             std::uint32_t u, std::uint32_t i);

}  // namespace macr
