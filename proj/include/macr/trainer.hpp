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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "macr/dataset.hpp"
#include "macr/eval.hpp"
#include "macr/model.hpp"

namespace macr {

enum class Method { Plain, Macr, BS, IPW, Reg };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

std::vector<double> default_c_grid();  // {20, 22, ..., 40}

struct TrainConfig {
  Method method = Method::Macr;
  BackboneKind backbone = BackboneKind::MF;
  int gcn_layers = 2;
  std::size_t embedding_dim = 64;
  HeadKind head = HeadKind::Affine;
  std::size_t mlp_hidden = 0;          // 0 -> embedding_dim
  bool heads_use_propagated = false;

  double alpha = 1e-3;
  double beta = 1e-3;
  double learning_rate = 1e-3;
  double l2_coeff = 1e-5;
  std::size_t batch_size = 1024;
  std::size_t epochs = 1000;
  std::size_t neg_ratio = 1;
  std::uint64_t rng_seed = 0;
  std::vector<double> c_grid = default_c_grid();

  // Ablation switches: drop a branch from the fusion, or only its loss term.
  bool use_user_branch = true;
  bool use_item_branch = true;
  bool use_l_u = true;
  bool use_l_i = true;

  std::size_t eval_every = 0;          // validate every N epochs (0 = never)
  int eval_k = 20;
  Metric eval_metric = Metric::HR;
  bool keep_best = false;              // restore best-validation parameters

  double ipw_smoothing = 1.0;
  double ipw_clip_quantile = 0.95;
  double reg_lambda = 1e-4;

  void validate() const;
  double effective_alpha() const { return use_item_branch && use_l_i ? alpha : 0.0; }
  double effective_beta() const { return use_user_branch && use_l_u ? beta : 0.0; }
};

/// Build an untrained model matching the config (branches only for MACR,
/// item bias table only for BS).
MacrModel make_model_for(const TrainConfig& cfg, std::size_t n_users, std::size_t n_items);

/// Per-batch context the gradient pass reads: the train graph for LightGCN
/// plus the per-item weights the baseline methods need.
struct TrainContext {
  const NormalizedAdjacency* adj = nullptr;
  std::shared_ptr<NormalizedAdjacency> adj_storage;
  std::vector<double> ipw_weights;     // pre-normalization, per item
  std::vector<double> pop_norm;        // per item, counts / max count
  static TrainContext build(const InteractionDataset& train, const TrainConfig& cfg);
};

/// Dense gradient buffer with a touched-row set; rows outside the set are
/// kept at exactly zero so the buffer doubles as the dense gradient view.
struct GradTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::uint32_t> touched;
  std::vector<std::uint8_t> flag;
  bool dense = false;

  void init(std::size_t rows, std::size_t dim);
  void reset();
  double* touch(std::uint32_t r);
  void touch_all();
};

struct HeadGrad {
  std::vector<double> w1, b1, w2;
  double b2 = 0.0;
  bool active = false;
  void init_like(const BranchHead& head);
  void reset();
  void scale(double s);
};

struct Gradients {
  GradTable user_emb;
  GradTable item_emb;
  HeadGrad user_head;
  HeadGrad item_head;
  std::vector<double> item_bias;
  std::vector<std::uint32_t> bias_touched;
  std::vector<std::uint8_t> bias_flag;
  bool bias_active = false;

  // LightGCN scratch: gradients w.r.t. propagated tables plus the
  // backpropagated result, with reusable propagation buffers.
  GradTable user_prop_grad;
  GradTable item_prop_grad;
  EmbeddingTable bp_users;
  EmbeddingTable bp_items;
  PropagationWorkspace prop_ws;

  void init_for(const MacrModel& model);
  void reset();
};

struct ObjectiveBreakdown {
  double l_o = 0.0;
  double l_i = 0.0;
  double l_u = 0.0;
  double l2 = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

/// Full training objective at the model's current (epoch-frozen) propagation:
/// macr_loss with the effective alpha/beta, the mean per-example L2 term on
/// the layer-0 embeddings, and the method-specific extras (item bias, IPW
/// weighting, popularity penalty).
ObjectiveBreakdown training_objective(const MacrModel& model, std::span<const LabeledExample> batch,
                                      const TrainConfig& cfg, const TrainContext& ctx);

/// Analytic gradients of training_objective into `grads` (reset first).
/// Parameters outside the touched sets receive no entry. Throws
/// NumericalError naming the block if any gradient is non-finite.
ObjectiveBreakdown compute_gradients(const MacrModel& model, std::span<const LabeledExample> batch,
                                     const TrainConfig& cfg, const TrainContext& ctx,
                                     Gradients& grads);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<double> m_user, v_user;
  std::vector<double> m_item, v_item;
  std::vector<double> m_user_head, v_user_head;  // flattened w1|b1|w2|b2
  std::vector<double> m_item_head, v_item_head;
  std::vector<double> m_bias, v_bias;

  static AdamState init_for(const MacrModel& model);
};

/// Bias-corrected Adam update applied lazily: only touched rows move.
void adam_step(MacrModel& model, const Gradients& grads, AdamState& state, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  double l_o = 0.0, l_i = 0.0, l_u = 0.0, l2 = 0.0, reg = 0.0, total = 0.0;
  std::optional<double> valid_metric;
};

struct TrainReport {
  std::vector<EpochRecord> trace;
  double wall_seconds = 0.0;
  bool plateaued = false;
  std::size_t best_epoch = 0;
  double best_valid = 0.0;
};

/// Mini-batch training: per epoch resample negatives, shuffle, refresh the
/// LightGCN propagation, then Adam steps per batch. Deterministic given the
/// seed. Throws NumericalError with epoch/batch context on divergence.
TrainReport train(MacrModel& model, const DatasetSplit& split, const TrainConfig& cfg);

void save_train_report(const TrainReport& report, const std::string& path);

struct FdBlockReport {
  std::string block;
  double max_abs_diff = 0.0;
  double max_rel_err = 0.0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

struct FdReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::vector<FdBlockReport> blocks;
};

/// Central-difference check of compute_gradients over every parameter.
/// Passes when |analytic - numeric| <= max(tolerance * max(|a|,|n|), floor)
/// everywhere; the floor is 1e-6. Cost is O(#params) objective evaluations.
FdReport finite_difference_check(MacrModel& model, std::span<const LabeledExample> batch,
                                 const TrainConfig& cfg, const TrainContext& ctx,
                                 double h, double tolerance);

struct CSweepRow {
  double c = 0.0;
  double hr = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Evaluate counterfactual ranking on the validation set for every grid
/// value; returns the argmax (ties toward smaller c) and the full sweep.
std::pair<double, std::vector<CSweepRow>> tune_reference_c(MacrModel& model,
                                                           const DatasetSplit& split,
                                                           const TrainConfig& cfg,
                                                           Metric metric, int k);

}  // namespace macr
