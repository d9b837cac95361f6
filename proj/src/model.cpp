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
#include "macr/model.hpp"

#include <cmath>

#include "macr/error.hpp"
#include "macr/rng.hpp"

namespace macr {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double fuse_scores(double y_k, double y_i, double y_u) {
  return y_k * sigmoid(y_i) * sigmoid(y_u);
}

double counterfactual_score(double y_k, double y_i, double y_u, double c) {
  return (y_k - c) * sigmoid(y_i) * sigmoid(y_u);
}

namespace {

constexpr double kLogFloor = 1e-12;

double bce_term(double score, double label) {
  const double p = sigmoid(score);
  return -label * std::log(std::max(p, kLogFloor)) -
         (1.0 - label) * std::log(std::max(1.0 - p, kLogFloor));
}

}  // namespace

double bce_loss(std::span<const double> scores, std::span<const float> labels) {
  if (scores.size() != labels.size()) throw UsageError("bce_loss: scores/labels length mismatch");
  if (scores.empty()) throw UsageError("bce_loss: empty batch");
  double acc = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) acc += bce_term(scores[k], labels[k]);
  return acc / static_cast<double>(scores.size());
}

std::string to_string(HeadKind kind) {
  return kind == HeadKind::Affine ? "affine" : "mlp";
}

HeadKind head_from_string(const std::string& name) {
  if (name == "affine") return HeadKind::Affine;
  if (name == "mlp") return HeadKind::Mlp;
  throw UsageError("unknown head kind: " + name);
}

BranchHead BranchHead::make(HeadKind kind, std::size_t dim, std::size_t hidden, Rng& rng) {
  BranchHead head;
  head.kind = kind;
  head.dim = dim;
  if (kind == HeadKind::Affine) {
    head.w2.resize(dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(dim + 1));
    for (auto& v : head.w2) v = rng.uniform_in(-bound, bound);
  } else {
    head.hidden = hidden == 0 ? dim : hidden;
    head.w1.resize(head.hidden * dim);
    head.b1.assign(head.hidden, 0.0);
    head.w2.resize(head.hidden);
    const double bound1 = std::sqrt(6.0 / static_cast<double>(dim + head.hidden));
    for (auto& v : head.w1) v = rng.uniform_in(-bound1, bound1);
    const double bound2 = std::sqrt(6.0 / static_cast<double>(head.hidden + 1));
    for (auto& v : head.w2) v = rng.uniform_in(-bound2, bound2);
  }
  return head;
}

double BranchHead::forward(const double* embedding) const {
  if (kind == HeadKind::Affine) {
    double acc = b2;
    for (std::size_t k = 0; k < dim; ++k) acc += w2[k] * embedding[k];
    return acc;
  }
  double acc = b2;
  for (std::size_t j = 0; j < hidden; ++j) {
    double a = b1[j];
    const double* row = w1.data() + j * dim;
    for (std::size_t k = 0; k < dim; ++k) a += row[k] * embedding[k];
    acc += w2[j] * std::tanh(a);
  }
  return acc;
}

std::size_t BranchHead::n_params() const {
  return w1.size() + b1.size() + w2.size() + 1;
}

MacrModel MacrModel::make(std::size_t n_users, std::size_t n_items, const ModelInit& init) {
  MacrModel model;
  model.backbone = init.backbone;
  model.gcn_layers = init.gcn_layers;
  model.has_user_branch = init.user_branch;
  model.has_item_branch = init.item_branch;
  model.heads_use_propagated = init.heads_use_propagated;
  model.user_emb = xavier_init(n_users, init.dim, Rng::derive(init.rng_seed, 0));
  model.item_emb = xavier_init(n_items, init.dim, Rng::derive(init.rng_seed, 1));
  Rng head_rng(Rng::derive(init.rng_seed, 2));
  model.user_head = BranchHead::make(init.head, init.dim, init.mlp_hidden, head_rng);
  model.item_head = BranchHead::make(init.head, init.dim, init.mlp_hidden, head_rng);
  if (init.item_bias) model.item_bias.assign(n_items, 0.0);
  return model;
}

void MacrModel::refresh_propagation(const NormalizedAdjacency& adj) {
  if (backbone != BackboneKind::LightGCN) return;
  lightgcn_propagate(user_emb, item_emb, adj, gcn_layers, user_prop, item_prop);
  prop_version = param_version;
}

namespace {

void check_fresh(const MacrModel& model) {
  if (model.backbone == BackboneKind::LightGCN && model.prop_version != model.param_version)
    throw StaleCacheError("LightGCN propagation cache is stale; call refresh_propagation()");
}

}  // namespace

const EmbeddingTable& MacrModel::match_users() const {
  if (backbone == BackboneKind::LightGCN) {
    check_fresh(*this);
    return user_prop;
  }
  return user_emb;
}

const EmbeddingTable& MacrModel::match_items() const {
  if (backbone == BackboneKind::LightGCN) {
    check_fresh(*this);
    return item_prop;
  }
  return item_emb;
}

const EmbeddingTable& MacrModel::branch_users() const {
  return heads_use_propagated ? match_users() : user_emb;
}

const EmbeddingTable& MacrModel::branch_items() const {
  return heads_use_propagated ? match_items() : item_emb;
}

double MacrModel::match_score(std::uint32_t u, std::uint32_t i) const {
  if (u >= n_users() || i >= n_items()) throw UsageError("match_score index out of range");
  const auto& users = match_users();
  const auto& items = match_items();
  return mf_match_score(users.row(u), items.row(i), users.dim);
}

double MacrModel::branch_score_user(std::uint32_t u) const {
  if (u >= n_users()) throw UsageError("branch_score_user index out of range");
  return user_head.forward(branch_users().row(u));
}

double MacrModel::branch_score_item(std::uint32_t i) const {
  if (i >= n_items()) throw UsageError("branch_score_item index out of range");
  return item_head.forward(branch_items().row(i));
}

double MacrModel::user_multiplier(std::uint32_t u) const {
  return has_user_branch ? sigmoid(branch_score_user(u)) : 1.0;
}

double MacrModel::item_multiplier(std::uint32_t i) const {
  return has_item_branch ? sigmoid(branch_score_item(i)) : 1.0;
}

double MacrModel::fused_score(std::uint32_t u, std::uint32_t i) const {
  return match_score(u, i) * item_multiplier(i) * user_multiplier(u);
}

double MacrModel::tie_score(std::uint32_t u, std::uint32_t i, double c) const {
  return (match_score(u, i) - c) * item_multiplier(i) * user_multiplier(u);
}

LossBreakdown macr_loss(const MacrModel& model, std::span<const LabeledExample> batch,
                        double alpha, double beta) {
  if (batch.empty()) throw UsageError("macr_loss: empty batch");
  if (alpha < 0.0 || beta < 0.0) throw UsageError("macr_loss: alpha, beta must be >= 0");

  LossBreakdown out;
  for (const auto& ex : batch) {
    const double y_k = model.match_score(ex.user, ex.item);
    const double label = ex.label;
    double term_i = 1.0, term_u = 1.0;
    if (model.has_item_branch) {
      const double y_i = model.branch_score_item(ex.item);
      term_i = sigmoid(y_i);
      out.l_i += bce_term(y_i, label);
    }
    if (model.has_user_branch) {
      const double y_u = model.branch_score_user(ex.user);
      term_u = sigmoid(y_u);
      out.l_u += bce_term(y_u, label);
    }
    out.l_o += bce_term(y_k * term_i * term_u, label);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.l_o *= inv;
  out.l_i *= inv;
  out.l_u *= inv;
  out.total = out.l_o + alpha * out.l_i + beta * out.l_u;
  return out;
}

namespace {

std::vector<double> column_mean(const EmbeddingTable& table) {
  std::vector<double> mean(table.dim, 0.0);
  for (std::size_t r = 0; r < table.rows; ++r) {
    const double* row = table.row(r);
    for (std::size_t k = 0; k < table.dim; ++k) mean[k] += row[k];
  }
  const double inv = table.rows > 0 ? 1.0 / static_cast<double>(table.rows) : 0.0;
  for (auto& v : mean) v *= inv;
  return mean;
}

}  // namespace

CausalReference compute_reference(const MacrModel& model) {
  CausalReference ref;
  ref.user_mean_match = column_mean(model.match_users());
  ref.item_mean_match = column_mean(model.match_items());
  ref.user_mean_branch = column_mean(model.branch_users());
  ref.item_mean_branch = column_mean(model.branch_items());
  ref.match_ref = mf_match_score(ref.user_mean_match, ref.item_mean_match);
  ref.user_branch_ref = model.user_head.forward(ref.user_mean_branch.data());
  ref.item_branch_ref = model.item_head.forward(ref.item_mean_branch.data());
  return ref;
}

namespace {

double reference_term(const MacrModel& model, const CausalReference& ref) {
  const double ti = model.has_item_branch ? sigmoid(ref.item_branch_ref) : 1.0;
  const double tu = model.has_user_branch ? sigmoid(ref.user_branch_ref) : 1.0;
  return ref.match_ref * ti * tu;
}

}  // namespace

double total_effect(const MacrModel& model, const CausalReference& ref,
                    std::uint32_t u, std::uint32_t i) {
  const double real = model.match_score(u, i) * model.item_multiplier(i) * model.user_multiplier(u);
  return real - reference_term(model, ref);
}

double natural_direct_effect(const MacrModel& model, const CausalReference& ref,
                             std::uint32_t u, std::uint32_t i) {
  const double direct = ref.match_ref * model.item_multiplier(i) * model.user_multiplier(u);
  return direct - reference_term(model, ref);
}

double total_indirect_effect(const MacrModel& model, const CausalReference& ref,
                             std::uint32_t u, std::uint32_t i) {
  return (model.match_score(u, i) - ref.match_ref) * model.item_multiplier(i) *
         model.user_multiplier(u);
}

}  // namespace macr
