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

#include "macr/error.hpp"
#include "macr/synth.hpp"
#include "macr/trainer.hpp"
#include "test_util.hpp"

using namespace macr;
using macr::testing::random_dataset;

namespace {

struct FdSetup {
  InteractionDataset data;
  MacrModel model;
  TrainContext ctx;
  std::vector<LabeledExample> batch;
};

FdSetup make_fd_setup(const TrainConfig& cfg, std::uint64_t seed) {
  FdSetup s{random_dataset(6, 5, 10, seed), {}, {}, {}};
  s.model = make_model_for(cfg, 6, 5);
  s.ctx = TrainContext::build(s.data, cfg);
  auto examples = sample_negatives(s.data, 1, seed + 7);
  examples.resize(std::min<std::size_t>(8, examples.size()));
  s.batch = std::move(examples);
  return s;
}

TrainConfig small_cfg(BackboneKind backbone, HeadKind head, Method method = Method::Macr) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.backbone = backbone;
  cfg.gcn_layers = 2;
  cfg.embedding_dim = 4;
  cfg.head = head;
  cfg.alpha = 1e-3;
  cfg.beta = 1e-3;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  return cfg;
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  for (auto backbone : {BackboneKind::MF, BackboneKind::LightGCN})
    for (auto head : {HeadKind::Affine, HeadKind::Mlp})
      for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        CAPTURE(static_cast<int>(backbone));
        CAPTURE(static_cast<int>(head));
        CAPTURE(seed);
        auto cfg = small_cfg(backbone, head);
        cfg.rng_seed = seed;
        auto s = make_fd_setup(cfg, seed);
        const auto report = finite_difference_check(s.model, s.batch, cfg, s.ctx, 1e-4, 1e-3);
        CHECK(report.pass);
        CHECK(report.max_rel_err < 1e-3);
      }
}

TEST_CASE("gradients of the baseline objectives also match") {
  for (auto method : {Method::Plain, Method::BS, Method::IPW, Method::Reg}) {
    CAPTURE(static_cast<int>(method));
    auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine, method);
    cfg.rng_seed = 5;
    auto s = make_fd_setup(cfg, 5);
    const auto report = finite_difference_check(s.model, s.batch, cfg, s.ctx, 1e-4, 1e-3);
    CHECK(report.pass);
  }
}

TEST_CASE("zero head weights still receive fused-path gradients") {
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  auto s = make_fd_setup(cfg, 9);
  std::fill(s.model.user_head.w2.begin(), s.model.user_head.w2.end(), 0.0);
  std::fill(s.model.item_head.w2.begin(), s.model.item_head.w2.end(), 0.0);
  s.model.user_head.b2 = s.model.item_head.b2 = 0.0;

  Gradients grads;
  grads.init_for(s.model);
  compute_gradients(s.model, s.batch, cfg, s.ctx, grads);
  double magnitude = 0.0;
  for (double v : grads.item_head.w2) magnitude += std::abs(v);
  CHECK(magnitude > 0.0);  // sigma(0) = 0.5 keeps the chain rule alive

  const auto report = finite_difference_check(s.model, s.batch, cfg, s.ctx, 1e-4, 1e-3);
  CHECK(report.pass);
}

TEST_CASE("a corrupted gradient fails the finite-difference criterion") {
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  auto s = make_fd_setup(cfg, 4);
  Gradients grads;
  grads.init_for(s.model);
  compute_gradients(s.model, s.batch, cfg, s.ctx, grads);

  const double h = 1e-4;
  double& param = s.model.user_emb.values[0];
  const double orig = param;
  param = orig + h;
  const double f_plus = training_objective(s.model, s.batch, cfg, s.ctx).total;
  param = orig - h;
  const double f_minus = training_objective(s.model, s.batch, cfg, s.ctx).total;
  param = orig;
  const double numeric = (f_plus - f_minus) / (2.0 * h);

  const double corrupted = grads.user_emb.values[0] + 1.0;
  const double denom = std::max(std::abs(corrupted), std::abs(numeric));
  CHECK(std::abs(corrupted - numeric) > std::max(1e-3 * denom, 1e-6));
}

TEST_CASE("duplicate examples contribute linearly in the batch mean") {
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  auto s = make_fd_setup(cfg, 6);
  const LabeledExample x = s.batch[0];

  Gradients g1, g2;
  g1.init_for(s.model);
  g2.init_for(s.model);
  std::vector<LabeledExample> once = {x}, twice = {x, x};
  compute_gradients(s.model, once, cfg, s.ctx, g1);
  compute_gradients(s.model, twice, cfg, s.ctx, g2);
  // Mean over {x, x} equals the single-example gradient; the numerator doubled.
  for (std::size_t k = 0; k < g1.user_emb.values.size(); ++k)
    CHECK(g2.user_emb.values[k] == doctest::Approx(g1.user_emb.values[k]).epsilon(1e-14));
}

TEST_CASE("non-finite inputs surface as NumericalError") {
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  auto s = make_fd_setup(cfg, 8);
  s.model.user_emb.row(s.batch[0].user)[0] = 1e308;
  s.model.user_emb.row(s.batch[0].user)[1] = -1e308;
  s.model.item_emb.row(s.batch[0].item)[0] = 1e308;
  s.model.item_emb.row(s.batch[0].item)[1] = 1e308;
  Gradients grads;
  grads.init_for(s.model);
  CHECK_THROWS_AS(compute_gradients(s.model, s.batch, cfg, s.ctx, grads), NumericalError);
}

TEST_CASE("adam_step basics") {
  TrainConfig cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 1;
  auto model = make_model_for(cfg, 1, 1);
  model.user_emb.values[0] = 0.0;
  auto state = AdamState::init_for(model);
  Gradients grads;
  grads.init_for(model);

  SUBCASE("zero gradient from a fresh state leaves parameters unchanged") {
    *grads.user_emb.touch(0) = 0.0;
    adam_step(model, grads, state, 0.1);
    CHECK(model.user_emb.values[0] == 0.0);
    CHECK(state.m_user[0] == 0.0);
    CHECK(state.v_user[0] == 0.0);
  }
  SUBCASE("zero gradient decays existing moments") {
    state.m_user[0] = 1.0;
    state.v_user[0] = 1.0;
    *grads.user_emb.touch(0) = 0.0;
    adam_step(model, grads, state, 0.1);
    CHECK(state.m_user[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(state.v_user[0] == doctest::Approx(0.999).epsilon(1e-15));
  }
  SUBCASE("first step is approximately lr * sign(gradient)") {
    const double g = 0.37;
    *grads.user_emb.touch(0) = g;
    adam_step(model, grads, state, 0.01);
    CHECK(model.user_emb.values[0] == doctest::Approx(-0.01).epsilon(1e-6));
  }
  SUBCASE("shape mismatch is rejected") {
    auto other = make_model_for(cfg, 2, 1);
    CHECK_THROWS_AS(adam_step(other, grads, state, 0.1), UsageError);
  }
}

TEST_CASE("adam approaches a one-dimensional quadratic minimum") {
  TrainConfig cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 1;
  auto model = make_model_for(cfg, 1, 1);
  model.user_emb.values[0] = 0.0;
  auto state = AdamState::init_for(model);
  Gradients grads;
  grads.init_for(model);
  const double target = 3.0;
  model.user_emb.values[0] = 2.5;
  for (int step = 0; step < 100; ++step) {
    grads.reset();
    *grads.user_emb.touch(0) = model.user_emb.values[0] - target;  // d/dx (x-3)^2/2
    adam_step(model, grads, state, 0.02);
  }
  CHECK(std::abs(model.user_emb.values[0] - target) < 1e-3);
}

TEST_CASE("a batch leaves untouched embedding rows bit-identical") {
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  auto model = make_model_for(cfg, 10, 10);
  const auto before_users = model.user_emb.values;
  const auto before_items = model.item_emb.values;
  const auto data = random_dataset(10, 10, 20, 3);
  auto ctx = TrainContext::build(data, cfg);
  std::vector<LabeledExample> batch = {{0, 2, 1.0f}, {1, 3, 0.0f}};
  Gradients grads;
  grads.init_for(model);
  auto state = AdamState::init_for(model);
  compute_gradients(model, batch, cfg, ctx, grads);
  adam_step(model, grads, state, 0.05);

  const std::size_t d = model.dim();
  for (std::size_t u = 0; u < 10; ++u) {
    const bool touched = u == 0 || u == 1;
    for (std::size_t k = 0; k < d; ++k) {
      if (touched) continue;
      CHECK(model.user_emb.values[u * d + k] == before_users[u * d + k]);
    }
  }
  for (std::size_t i = 0; i < 10; ++i) {
    const bool touched = i == 2 || i == 3;
    for (std::size_t k = 0; k < d; ++k) {
      if (touched) continue;
      CHECK(model.item_emb.values[i * d + k] == before_items[i * d + k]);
    }
  }
  CHECK(model.user_emb.values[0] != before_users[0]);
}

TEST_CASE("l2 = 0 gives the pure-loss gradients") {
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  auto s = make_fd_setup(cfg, 10);
  std::vector<LabeledExample> batch = {s.batch[0]};

  auto cfg0 = cfg;
  cfg0.l2_coeff = 0.0;
  auto cfg1 = cfg;
  cfg1.l2_coeff = 0.01;
  Gradients g0, g1;
  g0.init_for(s.model);
  g1.init_for(s.model);
  compute_gradients(s.model, batch, cfg0, s.ctx, g0);
  compute_gradients(s.model, batch, cfg1, s.ctx, g1);

  CHECK(g0.user_head.w2 == g1.user_head.w2);  // heads are not regularized
  const std::size_t d = s.model.dim();
  const auto u = batch[0].user;
  for (std::size_t k = 0; k < d; ++k) {
    const double expected = 2.0 * 0.01 * s.model.user_emb.row(u)[k];
    const double diff = g1.user_emb.values[u * d + k] - g0.user_emb.values[u * d + k];
    CHECK(diff == doctest::Approx(expected).epsilon(1e-9));
  }
}

namespace {

DatasetSplit small_split(std::uint64_t seed) {
  SynthSpec spec;
  spec.n_users = 400;
  spec.n_items = 50;
  spec.n_interactions = 12000;
  spec.rng_seed = seed;
  const auto data = generate_synthetic(spec);
  return build_debiased_split(data, {0.1, 0.1, seed});
}

}  // namespace

TEST_CASE("train: zero epochs leaves the model untouched") {
  const auto split = small_split(3);
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 8;
  cfg.epochs = 0;
  auto model = make_model_for(cfg, split.n_users, split.n_items);
  const auto before = model.user_emb.values;
  const auto report = train(model, split, cfg);
  CHECK(report.trace.empty());
  CHECK(model.user_emb.values == before);
}

TEST_CASE("train is deterministic given the seed") {
  const auto split = small_split(4);
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 8;
  cfg.epochs = 3;
  cfg.batch_size = 512;
  cfg.rng_seed = 77;
  auto m1 = make_model_for(cfg, split.n_users, split.n_items);
  auto m2 = make_model_for(cfg, split.n_users, split.n_items);
  const auto r1 = train(m1, split, cfg);
  const auto r2 = train(m2, split, cfg);
  CHECK(m1.user_emb.values == m2.user_emb.values);
  CHECK(m1.item_emb.values == m2.item_emb.values);
  CHECK(m1.user_head.w2 == m2.user_head.w2);
  REQUIRE(r1.trace.size() == r2.trace.size());
  for (std::size_t e = 0; e < r1.trace.size(); ++e)
    CHECK(r1.trace[e].total == r2.trace[e].total);
}

TEST_CASE("training halves the fused loss within 50 epochs") {
  const auto split = small_split(5);
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 16;
  cfg.epochs = 50;
  cfg.batch_size = 128;  // step budget scaled down with the dataset
  cfg.learning_rate = 2e-3;
  auto model = make_model_for(cfg, split.n_users, split.n_items);
  const auto report = train(model, split, cfg);
  REQUIRE(report.trace.size() == 50);
  CHECK(report.trace.back().l_o <= 0.5 * report.trace.front().l_o);
}

TEST_CASE("LightGCN training also descends and stays finite") {
  const auto split = small_split(6);
  auto cfg = small_cfg(BackboneKind::LightGCN, HeadKind::Affine);
  cfg.embedding_dim = 8;
  cfg.epochs = 10;
  cfg.batch_size = 512;
  auto model = make_model_for(cfg, split.n_users, split.n_items);
  const auto report = train(model, split, cfg);
  REQUIRE(report.trace.size() == 10);
  CHECK(report.trace.back().l_o < report.trace.front().l_o);
  for (const auto& rec : report.trace) CHECK(std::isfinite(rec.total));
}

TEST_CASE("validation trace is recorded when requested") {
  const auto split = small_split(7);
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 8;
  cfg.epochs = 4;
  cfg.eval_every = 2;
  cfg.eval_k = 5;
  auto model = make_model_for(cfg, split.n_users, split.n_items);
  const auto report = train(model, split, cfg);
  std::size_t with_valid = 0;
  for (const auto& rec : report.trace)
    if (rec.valid_metric) ++with_valid;
  CHECK(with_valid == 2);
  CHECK(report.best_epoch > 0);
}

TEST_CASE("tune_reference_c returns the grid argmax with ties toward smaller c") {
  DatasetSplit split;
  split.n_users = 3;
  split.n_items = 2;
  std::vector<Interaction> train_pairs = {{0, 0}, {1, 0}, {2, 0}, {0, 1}};
  split.train = InteractionDataset::from_pairs(3, 2, std::move(train_pairs));
  split.valid = {{1, 1}, {2, 1}};
  split.test = {};

  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 4;
  auto model = make_model_for(cfg, 3, 2);

  SUBCASE("singleton grid") {
    cfg.c_grid = {0.0};
    const auto [c, sweep] = tune_reference_c(model, split, cfg, Metric::HR, 1);
    CHECK(c == 0.0);
    CHECK(sweep.size() == 1);
  }
  SUBCASE("identical metrics break toward the smallest c") {
    // Users 1 and 2 have a single candidate item, so every c yields HR = 1.
    cfg.c_grid = {6.0, 2.0, 4.0};
    std::sort(cfg.c_grid.begin(), cfg.c_grid.end());
    const auto [c, sweep] = tune_reference_c(model, split, cfg, Metric::HR, 1);
    CHECK(c == 2.0);
    CHECK(sweep.size() == 3);
    for (const auto& row : sweep) CHECK(row.hr == 1.0);
  }
}

TEST_CASE("train report serializes one JSON record per epoch") {
  const auto split = small_split(8);
  auto cfg = small_cfg(BackboneKind::MF, HeadKind::Affine);
  cfg.embedding_dim = 8;
  cfg.epochs = 3;
  auto model = make_model_for(cfg, split.n_users, split.n_items);
  const auto report = train(model, split, cfg);
  macr::testing::TempDir dir("macr-report");
  save_train_report(report, dir.file("log.jsonl"));
  const auto text = macr::testing::read_file(dir.file("log.jsonl"));
  std::size_t lines = 0;
  for (char ch : text)
    if (ch == '\n') ++lines;
  CHECK(lines == 3);
  CHECK(text.find("\"L_O\"") != std::string::npos);
}

TEST_CASE("config validation rejects nonsense") {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = TrainConfig{};
  cfg.c_grid.clear();
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = TrainConfig{};
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
}
