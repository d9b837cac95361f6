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
//
// Experiment driver: split / train / tune-c / evaluate / analyze / datagen.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "macr/checkpoint.hpp"
#include "macr/config.hpp"
#include "macr/dataset.hpp"
#include "macr/error.hpp"
#include "macr/eval.hpp"
#include "macr/synth.hpp"
#include "macr/trainer.hpp"

namespace {

using macr::ExperimentConfig;

// Config file first, CLI flags second: the file (if any) seeds the defaults
// the parser then overrides.
ExperimentConfig preload_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return ExperimentConfig::from_file(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return ExperimentConfig::from_file(arg.substr(9));
  }
  return ExperimentConfig{};
}

void register_options(CLI::App* cmd, ExperimentConfig& cfg) {
  std::string sink;
  cmd->add_option("--config", sink, "config file (key = value, [section] headers)");
  cmd->add_option("--data", cfg.data, "interaction log path");
  cmd->add_option("--delimiter", cfg.delimiter, "tab | comma | space | single char");
  cmd->add_option("--split_dir", cfg.split_dir, "split directory");
  cmd->add_option("--out_dir", cfg.out_dir, "output directory");
  cmd->add_option("--checkpoint", cfg.checkpoint, "checkpoint path (default out_dir/checkpoint.bin)");
  cmd->add_option("--threads", cfg.threads, "OpenMP threads (0 = library default)");
  cmd->add_option("--bins", cfg.bins, "popularity/activity group count");
  cmd->add_option("--test_fraction", cfg.test_fraction);
  cmd->add_option("--valid_fraction", cfg.valid_fraction);
  cmd->add_option("--seed", cfg.seed);
  cmd->add_option("--method", cfg.method, "plain | macr | bs | ipw | reg");
  cmd->add_option("--backbone", cfg.backbone, "mf | lightgcn");
  cmd->add_option("--layers", cfg.layers);
  cmd->add_option("--dim", cfg.dim);
  cmd->add_option("--head", cfg.head, "affine | mlp");
  cmd->add_option("--mlp_hidden", cfg.mlp_hidden);
  cmd->add_option("--heads_use_propagated", cfg.heads_use_propagated);
  cmd->add_option("--alpha", cfg.alpha);
  cmd->add_option("--beta", cfg.beta);
  cmd->add_option("--lr", cfg.lr);
  cmd->add_option("--l2", cfg.l2);
  cmd->add_option("--batch_size", cfg.batch_size);
  cmd->add_option("--epochs", cfg.epochs);
  cmd->add_option("--neg_ratio", cfg.neg_ratio);
  cmd->add_option("--c_grid", cfg.c_grid, "comma-separated reference grid");
  cmd->add_option("--eval_every", cfg.eval_every);
  cmd->add_option("--eval_k", cfg.eval_k);
  cmd->add_option("--eval_metric", cfg.eval_metric, "hr | recall | ndcg");
  cmd->add_option("--keep_best", cfg.keep_best);
  cmd->add_flag("--no-user-branch,--no_user_branch", cfg.no_user_branch,
                "drop the user branch from fusion");
  cmd->add_flag("--no-item-branch,--no_item_branch", cfg.no_item_branch,
                "drop the item branch from fusion");
  cmd->add_flag("--no-l-u,--no_l_u", cfg.no_l_u, "drop the user-branch loss term");
  cmd->add_flag("--no-l-i,--no_l_i", cfg.no_l_i, "drop the item-branch loss term");
  cmd->add_option("--ipw_smoothing", cfg.ipw_smoothing);
  cmd->add_option("--ipw_clip_quantile", cfg.ipw_clip_quantile);
  cmd->add_option("--reg_lambda", cfg.reg_lambda);
  cmd->add_option("--ks", cfg.ks, "comma-separated metric cutoffs");
  cmd->add_option("--eval_mode", cfg.eval_mode, "te | tie");
  cmd->add_option("--c", cfg.c, "reference constant for tie mode");
}

void apply_threads(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
}

std::string checkpoint_path(const ExperimentConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out_dir + "/checkpoint.bin" : cfg.checkpoint;
}

void cmd_split(const ExperimentConfig& cfg) {
  if (cfg.data.empty()) throw macr::UsageError("split needs --data");
  if (cfg.split_dir.empty()) throw macr::UsageError("split needs --split_dir");
  const auto loaded = macr::load_interactions(cfg.data, cfg.delimiter_char());
  const auto split = macr::build_debiased_split(loaded.data, cfg.split_spec());
  macr::save_split(split, loaded.ids, cfg.seed, cfg.split_dir);
  cfg.save(cfg.split_dir + "/config_split.cfg");
  std::printf("split: %zu users, %zu items | train %zu, valid %zu, test %zu -> %s\n",
              split.n_users, split.n_items, split.train.n_positives(), split.valid.size(),
              split.test.size(), cfg.split_dir.c_str());
}

void cmd_train(const ExperimentConfig& cfg) {
  if (cfg.split_dir.empty()) throw macr::UsageError("train needs --split_dir");
  const auto split = macr::load_split(cfg.split_dir);
  const auto tc = cfg.train_config();
  auto model = macr::make_model_for(tc, split.n_users, split.n_items);
  const auto report = macr::train(model, split, tc);

  std::filesystem::create_directories(cfg.out_dir);
  macr::save_checkpoint(model, tc.epochs, cfg.method, checkpoint_path(cfg));
  macr::save_train_report(report, cfg.out_dir + "/train_log.jsonl");
  cfg.save(cfg.out_dir + "/config_train.cfg");
  const double final_loss = report.trace.empty() ? 0.0 : report.trace.back().total;
  std::printf("train: %s_%s, %zu epochs in %.1fs, final loss %.6f%s\n", cfg.method.c_str(),
              cfg.backbone.c_str(), cfg.epochs, report.wall_seconds, final_loss,
              report.plateaued ? " (validation plateaued)" : "");
}

void cmd_tune_c(const ExperimentConfig& cfg) {
  if (cfg.split_dir.empty()) throw macr::UsageError("tune-c needs --split_dir");
  const auto split = macr::load_split(cfg.split_dir);
  auto loaded = macr::load_checkpoint(checkpoint_path(cfg));
  const auto tc = cfg.train_config();
  const auto [best_c, sweep] = macr::tune_reference_c(
      loaded.model, split, tc, macr::metric_from_string(cfg.eval_metric), cfg.eval_k);

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir + "/c_sweep.csv", std::ios::binary);
  if (!csv) throw macr::DataError("cannot write c sweep");
  csv << "c,hr,recall,ndcg\n";
  char buf[160];
  for (const auto& row : sweep) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%.10g\n", row.c, row.hr, row.recall,
                  row.ndcg);
    csv << buf;
  }
  cfg.save(cfg.out_dir + "/config_tune_c.cfg");
  std::printf("tune-c: best c = %.10g by %s@%d on validation (%zu grid points)\n", best_c,
              cfg.eval_metric.c_str(), cfg.eval_k, sweep.size());
}

void cmd_evaluate(const ExperimentConfig& cfg) {
  if (cfg.split_dir.empty()) throw macr::UsageError("evaluate needs --split_dir");
  const auto split = macr::load_split(cfg.split_dir);
  auto loaded = macr::load_checkpoint(checkpoint_path(cfg));
  const auto mode = macr::score_mode_from_string(cfg.eval_mode);
  const auto adj = macr::NormalizedAdjacency::build(split.train);
  loaded.model.refresh_propagation(adj);

  const auto report = macr::evaluate(loaded.model, split, macr::EvalTarget::Test, mode, cfg.c,
                                     cfg.ks_list());
  std::filesystem::create_directories(cfg.out_dir);
  const std::string stem = cfg.out_dir + "/metrics_" + cfg.eval_mode;
  macr::save_metric_csv(report, stem + ".csv");
  macr::save_metric_json(report, stem + ".json");
  cfg.save(cfg.out_dir + "/config_evaluate_" + cfg.eval_mode + ".cfg");
  for (std::size_t idx = 0; idx < report.ks.size(); ++idx)
    std::printf("K=%d  HR %.4f  Recall %.4f  NDCG %.4f  (%zu users)\n", report.ks[idx],
                report.hr[idx], report.recall[idx], report.ndcg[idx], report.users_evaluated);
}

void cmd_analyze(const ExperimentConfig& cfg) {
  if (cfg.split_dir.empty()) throw macr::UsageError("analyze needs --split_dir");
  const auto split = macr::load_split(cfg.split_dir);
  auto loaded = macr::load_checkpoint(checkpoint_path(cfg));
  const auto adj = macr::NormalizedAdjacency::build(split.train);
  loaded.model.refresh_propagation(adj);
  const auto mode = macr::score_mode_from_string(cfg.eval_mode);

  const auto item_profile = macr::item_popularity(split.train, cfg.bins);
  const auto user_profile = macr::user_activity(split.train, cfg.bins);
  const auto test = macr::test_items_by_user(split.test, split.n_users);
  const auto valid_by_user = macr::test_items_by_user(split.valid, split.n_users);

  std::vector<std::uint32_t> users;
  std::vector<std::vector<std::uint32_t>> excluded;
  for (std::size_t u = 0; u < split.n_users; ++u) {
    if (test[u].empty()) continue;
    users.push_back(static_cast<std::uint32_t>(u));
    auto ex = split.train.user_items[u];
    ex.insert(ex.end(), valid_by_user[u].begin(), valid_by_user[u].end());
    std::sort(ex.begin(), ex.end());
    ex.erase(std::unique(ex.begin(), ex.end()), ex.end());
    excluded.push_back(std::move(ex));
  }
  const auto ranking = macr::rank_all_items(
      loaded.model, mode == macr::ScoreMode::TIE ? std::optional<double>(cfg.c) : std::nullopt,
      users, excluded, cfg.eval_k);

  std::filesystem::create_directories(cfg.out_dir);
  macr::save_group_csv(macr::analyze_recommendation_frequency(ranking, item_profile),
                       cfg.out_dir + "/freq_groups.csv");
  macr::save_group_csv(macr::analyze_group_recall(ranking, test, item_profile),
                       cfg.out_dir + "/recall_groups.csv");
  if (loaded.model.has_user_branch)
    macr::save_group_csv(
        macr::analyze_branch_activation(loaded.model, user_profile, macr::Branch::User),
        cfg.out_dir + "/sigma_user_groups.csv");
  if (loaded.model.has_item_branch)
    macr::save_group_csv(
        macr::analyze_branch_activation(loaded.model, item_profile, macr::Branch::Item),
        cfg.out_dir + "/sigma_item_groups.csv");
  cfg.save(cfg.out_dir + "/config_analyze.cfg");
  std::printf("analyze: wrote group tables for %zu users to %s\n", users.size(),
              cfg.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual-reasoning collaborative filtering experiments"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  try {
    cfg = preload_config(argc, argv);
  } catch (const macr::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }

  macr::SynthSpec synth;
  auto* split_cmd = app.add_subcommand("split", "build the debiased train/valid/test split");
  auto* train_cmd = app.add_subcommand("train", "train a model on an existing split");
  auto* tune_cmd = app.add_subcommand("tune-c", "sweep the counterfactual constant on validation");
  auto* eval_cmd = app.add_subcommand("evaluate", "top-K metrics on the test split");
  auto* analyze_cmd = app.add_subcommand("analyze", "popularity-group analysis tables");
  auto* datagen_cmd = app.add_subcommand("datagen", "generate a synthetic interaction log");
  for (auto* cmd : {split_cmd, train_cmd, tune_cmd, eval_cmd, analyze_cmd, datagen_cmd})
    register_options(cmd, cfg);
  datagen_cmd->add_option("--users", synth.n_users);
  datagen_cmd->add_option("--items", synth.n_items);
  datagen_cmd->add_option("--interactions", synth.n_interactions);
  datagen_cmd->add_option("--latent_dim", synth.latent_dim);
  datagen_cmd->add_option("--affinity", synth.affinity_scale);
  datagen_cmd->add_option("--pop_exponent", synth.pop_exponent);
  datagen_cmd->add_option("--conformity_sigma", synth.conformity_sigma);
  datagen_cmd->add_option("--activity_sigma", synth.activity_sigma);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_threads(cfg);
    if (split_cmd->parsed()) cmd_split(cfg);
    if (train_cmd->parsed()) cmd_train(cfg);
    if (tune_cmd->parsed()) cmd_tune_c(cfg);
    if (eval_cmd->parsed()) cmd_evaluate(cfg);
    if (analyze_cmd->parsed()) cmd_analyze(cfg);
    if (datagen_cmd->parsed()) {
      if (cfg.data.empty()) throw macr::UsageError("datagen needs --data as the output path");
      synth.rng_seed = cfg.seed;
      const auto data = macr::generate_synthetic(synth);
      macr::save_interactions(data, cfg.data);
      std::printf("datagen: %zu users, %zu items, %zu interactions -> %s\n", data.n_users,
                  data.n_items, data.n_positives(), cfg.data.c_str());
    }
  } catch (const macr::UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const macr::DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const macr::NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
