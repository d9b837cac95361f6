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
#include "macr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "macr/baselines.hpp"
#include "macr/error.hpp"
#include "macr/eval.hpp"
#include "macr/rng.hpp"

namespace macr {

std::string to_string(Method method) {
  switch (method) {
    case Method::Plain: return "plain";
    case Method::Macr: return "macr";
    case Method::BS: return "bs";
    case Method::IPW: return "ipw";
    case Method::Reg: return "reg";
  }
  return "plain";
}

Method method_from_string(const std::string& name) {
  if (name == "plain") return Method::Plain;
  if (name == "macr") return Method::Macr;
  if (name == "bs") return Method::BS;
  if (name == "ipw") return Method::IPW;
  if (name == "reg") return Method::Reg;
  throw UsageError("unknown method: " + name);
}

std::vector<double> default_c_grid() {
  std::vector<double> grid;
  for (int c = 20; c <= 40; c += 2) grid.push_back(static_cast<double>(c));
  return grid;
}

void TrainConfig::validate() const {
  if (embedding_dim < 1) throw UsageError("embedding_dim must be >= 1");
  if (learning_rate <= 0.0) throw UsageError("learning_rate must be positive");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (neg_ratio < 1) throw UsageError("neg_ratio must be >= 1");
  if (alpha < 0.0 || beta < 0.0) throw UsageError("alpha, beta must be >= 0");
  if (l2_coeff < 0.0) throw UsageError("l2 must be >= 0");
  if (backbone == BackboneKind::LightGCN && gcn_layers < 0)
    throw UsageError("gcn layers must be >= 0");
  if (c_grid.empty()) throw UsageError("c_grid must be non-empty");
}

MacrModel make_model_for(const TrainConfig& cfg, std::size_t n_users, std::size_t n_items) {
  cfg.validate();
  ModelInit init;
  init.backbone = cfg.backbone;
  init.gcn_layers = cfg.gcn_layers;
  init.dim = cfg.embedding_dim;
  init.head = cfg.head;
  init.mlp_hidden = cfg.mlp_hidden;
  init.user_branch = cfg.method == Method::Macr && cfg.use_user_branch;
  init.item_branch = cfg.method == Method::Macr && cfg.use_item_branch;
  init.heads_use_propagated = cfg.heads_use_propagated;
  init.item_bias = cfg.method == Method::BS;
  init.rng_seed = cfg.rng_seed;
  return MacrModel::make(n_users, n_items, init);
}

TrainContext TrainContext::build(const InteractionDataset& train, const TrainConfig& cfg) {
  TrainContext ctx;
  ctx.adj_storage = std::make_shared<NormalizedAdjacency>(NormalizedAdjacency::build(train));
  ctx.adj = ctx.adj_storage.get();
  if (cfg.method == Method::IPW) {
    const PopularityProfile profile = item_popularity(train);
    ctx.ipw_weights = ipw_item_weights(profile.item_counts, cfg.ipw_smoothing,
                                       cfg.ipw_clip_quantile);
  }
  if (cfg.method == Method::Reg) {
    const PopularityProfile profile = item_popularity(train);
    const double max_count = static_cast<double>(
        *std::max_element(profile.item_counts.begin(), profile.item_counts.end()));
    ctx.pop_norm.resize(profile.item_counts.size());
    for (std::size_t i = 0; i < ctx.pop_norm.size(); ++i)
      ctx.pop_norm[i] = max_count > 0 ? profile.item_counts[i] / max_count : 0.0;
  }
  return ctx;
}

void GradTable::init(std::size_t rows_, std::size_t dim_) {
  rows = rows_;
  dim = dim_;
  values.assign(rows * dim, 0.0);
  touched.clear();
  flag.assign(rows, 0);
  dense = false;
}

void GradTable::reset() {
  if (dense) {
    std::fill(values.begin(), values.end(), 0.0);
    std::fill(flag.begin(), flag.end(), 0);
  } else {
    for (std::uint32_t r : touched) {
      double* row = values.data() + static_cast<std::size_t>(r) * dim;
      std::fill(row, row + dim, 0.0);
      flag[r] = 0;
    }
  }
  touched.clear();
  dense = false;
}

double* GradTable::touch(std::uint32_t r) {
  if (!flag[r]) {
    flag[r] = 1;
    touched.push_back(r);
  }
  return values.data() + static_cast<std::size_t>(r) * dim;
}

void GradTable::touch_all() {
  dense = true;
  touched.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) touched[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(r);
  std::fill(flag.begin(), flag.end(), 1);
}

void HeadGrad::init_like(const BranchHead& head) {
  w1.assign(head.w1.size(), 0.0);
  b1.assign(head.b1.size(), 0.0);
  w2.assign(head.w2.size(), 0.0);
  b2 = 0.0;
  active = false;
}

void HeadGrad::reset() {
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  b2 = 0.0;
  active = false;
}

void HeadGrad::scale(double s) {
  for (auto& v : w1) v *= s;
  for (auto& v : b1) v *= s;
  for (auto& v : w2) v *= s;
  b2 *= s;
}

void Gradients::init_for(const MacrModel& model) {
  user_emb.init(model.n_users(), model.dim());
  item_emb.init(model.n_items(), model.dim());
  user_head.init_like(model.user_head);
  item_head.init_like(model.item_head);
  item_bias.assign(model.item_bias.size(), 0.0);
  bias_flag.assign(model.item_bias.size(), 0);
  bias_touched.clear();
  bias_active = !model.item_bias.empty();
  if (model.backbone == BackboneKind::LightGCN) {
    user_prop_grad.init(model.n_users(), model.dim());
    item_prop_grad.init(model.n_items(), model.dim());
    bp_users = EmbeddingTable(model.n_users(), model.dim());
    bp_items = EmbeddingTable(model.n_items(), model.dim());
  }
}

void Gradients::reset() {
  user_emb.reset();
  item_emb.reset();
  user_head.reset();
  item_head.reset();
  for (std::uint32_t i : bias_touched) {
    item_bias[i] = 0.0;
    bias_flag[i] = 0;
  }
  bias_touched.clear();
  user_prop_grad.reset();
  item_prop_grad.reset();
}

namespace {

constexpr double kLogFloor = 1e-12;

double bce_term(double score, double label) {
  const double p = sigmoid(score);
  return -label * std::log(std::max(p, kLogFloor)) -
         (1.0 - label) * std::log(std::max(1.0 - p, kLogFloor));
}

// Backprop through a branch head: upstream g = dL/dy, input e. Accumulates
// parameter gradients and, when grad_e is non-null, dL/de.
void head_backward(const BranchHead& head, const double* e, double g, HeadGrad& grads,
                   double* grad_e) {
  grads.active = true;
  if (head.kind == HeadKind::Affine) {
    for (std::size_t k = 0; k < head.dim; ++k) {
      grads.w2[k] += g * e[k];
      if (grad_e) grad_e[k] += g * head.w2[k];
    }
    grads.b2 += g;
    return;
  }
  for (std::size_t j = 0; j < head.hidden; ++j) {
    const double* row = head.w1.data() + j * head.dim;
    double a = head.b1[j];
    for (std::size_t k = 0; k < head.dim; ++k) a += row[k] * e[k];
    const double hj = std::tanh(a);
    const double da = g * head.w2[j] * (1.0 - hj * hj);
    grads.w2[j] += g * hj;
    grads.b1[j] += da;
    double* w1g = grads.w1.data() + j * head.dim;
    for (std::size_t k = 0; k < head.dim; ++k) {
      w1g[k] += da * e[k];
      if (grad_e) grad_e[k] += da * row[k];
    }
  }
  grads.b2 += g;
}

struct BatchWeights {
  std::vector<double> w;  // normalized to mean 1 (IPW) or empty
};

BatchWeights ipw_batch_weights(std::span<const LabeledExample> batch, const TrainContext& ctx) {
  BatchWeights bw;
  if (ctx.ipw_weights.empty()) return bw;
  bw.w.resize(batch.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    bw.w[k] = ctx.ipw_weights[batch[k].item];
    sum += bw.w[k];
  }
  const double scale = sum > 0.0 ? static_cast<double>(batch.size()) / sum : 1.0;
  for (auto& v : bw.w) v *= scale;
  return bw;
}

void check_batch(const MacrModel& model, std::span<const LabeledExample> batch) {
  if (batch.empty()) throw UsageError("empty batch");
  for (const auto& ex : batch)
    if (ex.user >= model.n_users() || ex.item >= model.n_items())
      throw UsageError("batch example out of range");
}

}  // namespace

ObjectiveBreakdown training_objective(const MacrModel& model, std::span<const LabeledExample> batch,
                                      const TrainConfig& cfg, const TrainContext& ctx) {
  check_batch(model, batch);
  const auto& mu = model.match_users_frozen();
  const auto& mi = model.match_items_frozen();
  const auto& bu = model.branch_users_frozen();
  const auto& bi = model.branch_items_frozen();
  const std::size_t d = model.dim();
  const BatchWeights bw = ipw_batch_weights(batch, ctx);

  ObjectiveBreakdown out;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& ex = batch[n];
    const double weight = bw.w.empty() ? 1.0 : bw.w[n];
    double y_k = mf_match_score(mu.row(ex.user), mi.row(ex.item), d);
    if (!model.item_bias.empty()) y_k += model.item_bias[ex.item];

    double term_i = 1.0, term_u = 1.0;
    if (model.has_item_branch) {
      const double y_i = model.item_head.forward(bi.row(ex.item));
      term_i = sigmoid(y_i);
      out.l_i += bce_term(y_i, ex.label);
    }
    if (model.has_user_branch) {
      const double y_u = model.user_head.forward(bu.row(ex.user));
      term_u = sigmoid(y_u);
      out.l_u += bce_term(y_u, ex.label);
    }
    const double s = y_k * term_i * term_u;
    out.l_o += weight * bce_term(s, ex.label);

    if (!ctx.pop_norm.empty()) {
      const double p = sigmoid(s);
      out.reg += cfg.reg_lambda * ctx.pop_norm[ex.item] * p * p;
    }

    const double* eu0 = model.user_emb.row(ex.user);
    const double* ei0 = model.item_emb.row(ex.item);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += eu0[k] * eu0[k] + ei0[k] * ei0[k];
    out.l2 += cfg.l2_coeff * sq;
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  out.l_o *= inv;
  out.l_i *= inv;
  out.l_u *= inv;
  out.l2 *= inv;
  out.reg *= inv;
  out.total = out.l_o + cfg.effective_alpha() * out.l_i + cfg.effective_beta() * out.l_u +
              out.l2 + out.reg;
  return out;
}

ObjectiveBreakdown compute_gradients(const MacrModel& model, std::span<const LabeledExample> batch,
                                     const TrainConfig& cfg, const TrainContext& ctx,
                                     Gradients& grads) {
  check_batch(model, batch);
  const bool gcn = model.backbone == BackboneKind::LightGCN;
  if (gcn && ctx.adj == nullptr)
    throw UsageError("LightGCN gradients need the train adjacency in the context");

  grads.reset();
  const auto& mu = model.match_users_frozen();
  const auto& mi = model.match_items_frozen();
  const auto& bu = model.branch_users_frozen();
  const auto& bi = model.branch_items_frozen();
  const std::size_t d = model.dim();
  const double alpha = cfg.effective_alpha();
  const double beta = cfg.effective_beta();
  const BatchWeights bw = ipw_batch_weights(batch, ctx);
  const bool branch_on_prop = model.heads_use_propagated && gcn;

  GradTable& match_u_grad = gcn ? grads.user_prop_grad : grads.user_emb;
  GradTable& match_i_grad = gcn ? grads.item_prop_grad : grads.item_emb;
  GradTable& branch_u_grad = branch_on_prop ? grads.user_prop_grad : grads.user_emb;
  GradTable& branch_i_grad = branch_on_prop ? grads.item_prop_grad : grads.item_emb;

  ObjectiveBreakdown out;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& ex = batch[n];
    const double weight = bw.w.empty() ? 1.0 : bw.w[n];
    const double label = ex.label;
    const double* eu_m = mu.row(ex.user);
    const double* ei_m = mi.row(ex.item);
    double y_k = mf_match_score(eu_m, ei_m, d);
    if (!model.item_bias.empty()) y_k += model.item_bias[ex.item];

    double y_i = 0.0, y_u = 0.0, term_i = 1.0, term_u = 1.0;
    if (model.has_item_branch) {
      y_i = model.item_head.forward(bi.row(ex.item));
      term_i = sigmoid(y_i);
      out.l_i += bce_term(y_i, label);
    }
    if (model.has_user_branch) {
      y_u = model.user_head.forward(bu.row(ex.user));
      term_u = sigmoid(y_u);
      out.l_u += bce_term(y_u, label);
    }
    const double s = y_k * term_i * term_u;
    out.l_o += weight * bce_term(s, label);

    // d(loss)/ds for the fused-score path.
    double ds = weight * (sigmoid(s) - label);
    if (!ctx.pop_norm.empty()) {
      const double p = sigmoid(s);
      out.reg += cfg.reg_lambda * ctx.pop_norm[ex.item] * p * p;
      ds += cfg.reg_lambda * ctx.pop_norm[ex.item] * 2.0 * p * p * (1.0 - p);
    }

    const double g_yk = ds * term_i * term_u;
    double* gu = match_u_grad.touch(ex.user);
    double* gi = match_i_grad.touch(ex.item);
    for (std::size_t k = 0; k < d; ++k) {
      gu[k] += g_yk * ei_m[k];
      gi[k] += g_yk * eu_m[k];
    }
    if (!model.item_bias.empty()) {
      if (!grads.bias_flag[ex.item]) {
        grads.bias_flag[ex.item] = 1;
        grads.bias_touched.push_back(ex.item);
      }
      grads.item_bias[ex.item] += g_yk;
    }

    if (model.has_item_branch) {
      const double g_yi = ds * y_k * term_i * (1.0 - term_i) * term_u + alpha * (term_i - label);
      head_backward(model.item_head, bi.row(ex.item), g_yi, grads.item_head,
                    branch_i_grad.touch(ex.item));
    }
    if (model.has_user_branch) {
      const double g_yu = ds * y_k * term_i * term_u * (1.0 - term_u) + beta * (term_u - label);
      head_backward(model.user_head, bu.row(ex.user), g_yu, grads.user_head,
                    branch_u_grad.touch(ex.user));
    }

    // L2 on the layer-0 rows of the example.
    const double* eu0 = model.user_emb.row(ex.user);
    const double* ei0 = model.item_emb.row(ex.item);
    double sq = 0.0;
    double* gu0 = grads.user_emb.touch(ex.user);
    double* gi0 = grads.item_emb.touch(ex.item);
    const double two_l2 = 2.0 * cfg.l2_coeff;
    for (std::size_t k = 0; k < d; ++k) {
      sq += eu0[k] * eu0[k] + ei0[k] * ei0[k];
      gu0[k] += two_l2 * eu0[k];
      gi0[k] += two_l2 * ei0[k];
    }
    out.l2 += cfg.l2_coeff * sq;
  }

  // Backprop through the propagation: the layer-mean operator is symmetric,
  // so applying it to the propagated-table gradients yields the layer-0
  // gradients.
  if (gcn) {
    lightgcn_propagate_raw(grads.user_prop_grad.values.data(), grads.item_prop_grad.values.data(),
                           d, *ctx.adj, model.gcn_layers, grads.bp_users, grads.bp_items,
                           grads.prop_ws, true);
    grads.user_emb.touch_all();
    grads.item_emb.touch_all();
    for (std::size_t k = 0; k < grads.bp_users.values.size(); ++k)
      grads.user_emb.values[k] += grads.bp_users.values[k];
    for (std::size_t k = 0; k < grads.bp_items.values.size(); ++k)
      grads.item_emb.values[k] += grads.bp_items.values[k];
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  out.l_o *= inv;
  out.l_i *= inv;
  out.l_u *= inv;
  out.l2 *= inv;
  out.reg *= inv;
  out.total = out.l_o + alpha * out.l_i + beta * out.l_u + out.l2 + out.reg;

  double checksum = 0.0;
  for (std::uint32_t r : grads.user_emb.touched) {
    double* row = grads.user_emb.values.data() + static_cast<std::size_t>(r) * d;
    for (std::size_t k = 0; k < d; ++k) {
      row[k] *= inv;
      checksum += row[k];
    }
  }
  for (std::uint32_t r : grads.item_emb.touched) {
    double* row = grads.item_emb.values.data() + static_cast<std::size_t>(r) * d;
    for (std::size_t k = 0; k < d; ++k) {
      row[k] *= inv;
      checksum += row[k];
    }
  }
  if (!std::isfinite(checksum)) {
    for (std::uint32_t r : grads.user_emb.touched)
      for (std::size_t k = 0; k < d; ++k)
        if (!std::isfinite(grads.user_emb.values[static_cast<std::size_t>(r) * d + k]))
          throw NumericalError("non-finite gradient in user embedding row " + std::to_string(r));
    for (std::uint32_t r : grads.item_emb.touched)
      for (std::size_t k = 0; k < d; ++k)
        if (!std::isfinite(grads.item_emb.values[static_cast<std::size_t>(r) * d + k]))
          throw NumericalError("non-finite gradient in item embedding row " + std::to_string(r));
  }
  grads.user_head.scale(inv);
  grads.item_head.scale(inv);
  for (std::uint32_t i : grads.bias_touched) {
    grads.item_bias[i] *= inv;
    if (!std::isfinite(grads.item_bias[i]))
      throw NumericalError("non-finite gradient in item bias " + std::to_string(i));
  }
  for (double v : grads.user_head.w2)
    if (!std::isfinite(v)) throw NumericalError("non-finite gradient in user head");
  for (double v : grads.item_head.w2)
    if (!std::isfinite(v)) throw NumericalError("non-finite gradient in item head");
  return out;
}

AdamState AdamState::init_for(const MacrModel& model) {
  AdamState st;
  st.m_user.assign(model.user_emb.values.size(), 0.0);
  st.v_user.assign(model.user_emb.values.size(), 0.0);
  st.m_item.assign(model.item_emb.values.size(), 0.0);
  st.v_item.assign(model.item_emb.values.size(), 0.0);
  const std::size_t uh = model.user_head.n_params();
  const std::size_t ih = model.item_head.n_params();
  st.m_user_head.assign(uh, 0.0);
  st.v_user_head.assign(uh, 0.0);
  st.m_item_head.assign(ih, 0.0);
  st.v_item_head.assign(ih, 0.0);
  st.m_bias.assign(model.item_bias.size(), 0.0);
  st.v_bias.assign(model.item_bias.size(), 0.0);
  return st;
}

namespace {

inline void adam_update(double& p, double& m, double& v, double g, double lr, double b1,
                        double b2, double eps, double bc1, double bc2) {
  m = b1 * m + (1.0 - b1) * g;
  v = b2 * v + (1.0 - b2) * g * g;
  p -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
}

void adam_head(BranchHead& head, const HeadGrad& g, std::vector<double>& m, std::vector<double>& v,
               double lr, double b1, double b2, double eps, double bc1, double bc2) {
  std::size_t off = 0;
  auto run = [&](std::vector<double>& params, const std::vector<double>& grad) {
    for (std::size_t k = 0; k < params.size(); ++k)
      adam_update(params[k], m[off + k], v[off + k], grad[k], lr, b1, b2, eps, bc1, bc2);
    off += params.size();
  };
  run(head.w1, g.w1);
  run(head.b1, g.b1);
  run(head.w2, g.w2);
  adam_update(head.b2, m[off], v[off], g.b2, lr, b1, b2, eps, bc1, bc2);
}

}  // namespace

void adam_step(MacrModel& model, const Gradients& grads, AdamState& state, double lr) {
  if (grads.user_emb.values.size() != model.user_emb.values.size() ||
      grads.item_emb.values.size() != model.item_emb.values.size() ||
      grads.item_bias.size() != model.item_bias.size())
    throw UsageError("gradient shapes do not match the model");

  ++state.step_count;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
  const std::size_t d = model.dim();

  const auto update_rows = [&](EmbeddingTable& table, const GradTable& gt, std::vector<double>& m,
                               std::vector<double>& v) {
    const auto n = static_cast<std::int64_t>(gt.touched.size());
#pragma omp parallel for schedule(static) if (n > 1024)
    for (std::int64_t t = 0; t < n; ++t) {
      const std::size_t base = static_cast<std::size_t>(gt.touched[t]) * d;
      for (std::size_t k = 0; k < d; ++k)
        adam_update(table.values[base + k], m[base + k], v[base + k], gt.values[base + k], lr,
                    b1, b2, eps, bc1, bc2);
    }
  };
  update_rows(model.user_emb, grads.user_emb, state.m_user, state.v_user);
  update_rows(model.item_emb, grads.item_emb, state.m_item, state.v_item);

  if (grads.user_head.active)
    adam_head(model.user_head, grads.user_head, state.m_user_head, state.v_user_head, lr, b1, b2,
              eps, bc1, bc2);
  if (grads.item_head.active)
    adam_head(model.item_head, grads.item_head, state.m_item_head, state.v_item_head, lr, b1, b2,
              eps, bc1, bc2);
  for (std::uint32_t i : grads.bias_touched)
    adam_update(model.item_bias[i], state.m_bias[i], state.v_bias[i], grads.item_bias[i], lr, b1,
                b2, eps, bc1, bc2);

  model.mark_params_changed();
}

namespace {

void shuffle_examples(std::vector<LabeledExample>& examples, Rng& rng) {
  for (std::size_t i = examples.size(); i > 1; --i)
    std::swap(examples[i - 1], examples[rng.uniform_index(i)]);
}

bool plateau_reached(const std::vector<double>& trace) {
  if (trace.size() < 4) return false;
  const std::size_t tail = std::max<std::size_t>(1, trace.size() / 4);
  const std::size_t cut = trace.size() - tail;
  double best_head = trace[0], best_tail = trace[cut];
  for (std::size_t k = 0; k < cut; ++k) best_head = std::max(best_head, trace[k]);
  for (std::size_t k = cut; k < trace.size(); ++k) best_tail = std::max(best_tail, trace[k]);
  return best_tail <= best_head * 1.001;
}

}  // namespace

TrainReport train(MacrModel& model, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (model.n_users() != split.n_users || model.n_items() != split.n_items ||
      model.dim() != cfg.embedding_dim)
    throw UsageError("model shape does not match the split/config");

  const auto t0 = std::chrono::steady_clock::now();
  TrainContext ctx = TrainContext::build(split.train, cfg);
  Gradients grads;
  grads.init_for(model);
  AdamState adam = AdamState::init_for(model);
  Rng shuffle_rng(Rng::derive(cfg.rng_seed, 17));

  TrainReport report;
  std::vector<double> valid_trace;
  MacrModel best_snapshot;
  model.refresh_propagation(*ctx.adj);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto examples = sample_negatives(split.train, cfg.neg_ratio, Rng::derive(cfg.rng_seed, epoch));
    shuffle_examples(examples, shuffle_rng);
    model.refresh_propagation(*ctx.adj);

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, examples.size() - start);
      std::span<const LabeledExample> batch(examples.data() + start, len);
      const ObjectiveBreakdown loss = compute_gradients(model, batch, cfg, ctx, grads);
      if (!std::isfinite(loss.total))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(start / cfg.batch_size));
      adam_step(model, grads, adam, cfg.learning_rate);
      rec.l_o += loss.l_o * len;
      rec.l_i += loss.l_i * len;
      rec.l_u += loss.l_u * len;
      rec.l2 += loss.l2 * len;
      rec.reg += loss.reg * len;
      rec.total += loss.total * len;
      seen += len;
    }
    const double inv = seen > 0 ? 1.0 / static_cast<double>(seen) : 0.0;
    rec.l_o *= inv;
    rec.l_i *= inv;
    rec.l_u *= inv;
    rec.l2 *= inv;
    rec.reg *= inv;
    rec.total *= inv;

    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) &&
        !split.valid.empty()) {
      model.refresh_propagation(*ctx.adj);
      const MetricReport m =
          evaluate(model, split, EvalTarget::Valid, ScoreMode::TE, 0.0, {cfg.eval_k});
      const double value = m.at(cfg.eval_metric, cfg.eval_k);
      rec.valid_metric = value;
      valid_trace.push_back(value);
      if (value > report.best_valid || report.best_epoch == 0) {
        report.best_valid = value;
        report.best_epoch = epoch;
        if (cfg.keep_best) best_snapshot = model;
      }
    }
    report.trace.push_back(rec);
  }

  if (cfg.keep_best && report.best_epoch > 0) model = best_snapshot;
  model.refresh_propagation(*ctx.adj);
  report.plateaued = plateau_reached(valid_trace);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void save_train_report(const TrainReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write train report: " + path);
  for (const auto& rec : report.trace) {
    nlohmann::json j = {{"epoch", rec.epoch}, {"L_O", rec.l_o},   {"L_I", rec.l_i},
                        {"L_U", rec.l_u},     {"l2", rec.l2},     {"reg", rec.reg},
                        {"total", rec.total}};
    if (rec.valid_metric) j["valid_metric"] = *rec.valid_metric;
    out << j.dump() << '\n';
  }
}

FdReport finite_difference_check(MacrModel& model, std::span<const LabeledExample> batch,
                                 const TrainConfig& cfg, const TrainContext& ctx,
                                 double h, double tolerance) {
  if (ctx.adj == nullptr) throw UsageError("finite_difference_check needs the train adjacency");
  model.refresh_propagation(*ctx.adj);
  Gradients grads;
  grads.init_for(model);
  compute_gradients(model, batch, cfg, ctx, grads);

  struct Block {
    std::string name;
    double* params;
    std::size_t n;
    const double* grad;
  };
  std::vector<Block> blocks = {
      {"user_emb", model.user_emb.values.data(), model.user_emb.values.size(),
       grads.user_emb.values.data()},
      {"item_emb", model.item_emb.values.data(), model.item_emb.values.size(),
       grads.item_emb.values.data()},
  };
  auto add_head = [&](const std::string& name, BranchHead& head, const HeadGrad& g) {
    if (!head.w1.empty()) blocks.push_back({name + ".w1", head.w1.data(), head.w1.size(), g.w1.data()});
    if (!head.b1.empty()) blocks.push_back({name + ".b1", head.b1.data(), head.b1.size(), g.b1.data()});
    blocks.push_back({name + ".w2", head.w2.data(), head.w2.size(), g.w2.data()});
    blocks.push_back({name + ".b2", &head.b2, 1, &g.b2});
  };
  if (model.has_user_branch) add_head("user_head", model.user_head, grads.user_head);
  if (model.has_item_branch) add_head("item_head", model.item_head, grads.item_head);
  if (!model.item_bias.empty())
    blocks.push_back({"item_bias", model.item_bias.data(), model.item_bias.size(),
                      grads.item_bias.data()});

  auto objective = [&]() {
    model.refresh_propagation(*ctx.adj);
    return training_objective(model, batch, cfg, ctx).total;
  };

  FdReport report;
  report.pass = true;
  for (auto& blk : blocks) {
    FdBlockReport br;
    br.block = blk.name;
    for (std::size_t j = 0; j < blk.n; ++j) {
      const double orig = blk.params[j];
      blk.params[j] = orig + h;
      const double f_plus = objective();
      blk.params[j] = orig - h;
      const double f_minus = objective();
      blk.params[j] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double analytic = blk.grad[j];
      const double denom = std::max(std::abs(analytic), std::abs(numeric));
      const double diff = std::abs(analytic - numeric);
      const double rel = denom > 0.0 ? diff / denom : 0.0;
      if (diff > br.max_abs_diff) {
        br.max_abs_diff = diff;
        br.analytic_at_worst = analytic;
        br.numeric_at_worst = numeric;
      }
      br.max_rel_err = std::max(br.max_rel_err, rel);
      if (diff > std::max(tolerance * denom, 1e-6)) report.pass = false;
    }
    report.max_rel_err = std::max(report.max_rel_err, br.max_rel_err);
    report.blocks.push_back(br);
  }
  model.refresh_propagation(*ctx.adj);
  return report;
}

std::pair<double, std::vector<CSweepRow>> tune_reference_c(MacrModel& model,
                                                           const DatasetSplit& split,
                                                           const TrainConfig& cfg,
                                                           Metric metric, int k) {
  if (split.valid.empty()) throw DataError("tune_reference_c needs a non-empty validation set");
  if (cfg.c_grid.empty()) throw UsageError("c_grid must be non-empty");
  const NormalizedAdjacency adj = NormalizedAdjacency::build(split.train);
  model.refresh_propagation(adj);

  std::vector<CSweepRow> sweep;
  double best_c = cfg.c_grid.front();
  double best_value = -1.0;
  for (double c : cfg.c_grid) {
    const MetricReport m = evaluate(model, split, EvalTarget::Valid, ScoreMode::TIE, c, {k});
    CSweepRow row{c, m.hr[0], m.recall[0], m.ndcg[0]};
    sweep.push_back(row);
    const double value = m.at(metric, k);
    if (value > best_value) {
      best_value = value;
      best_c = c;
    }
  }
  return {best_c, sweep};
}

}  // namespace macr
