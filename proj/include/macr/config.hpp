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
#include "macr/trainer.hpp"

namespace macr {

/// Flat experiment configuration. Every field maps to one `key = value` line
/// in the config file and to one identically named CLI flag; CLI wins.
struct ExperimentConfig {
  // data
  std::string data;
  std::string delimiter = "tab";  // tab | comma | space | single char
  std::string split_dir;
  std::string out_dir = ".";
  std::string checkpoint;         // defaults to out_dir/checkpoint.bin
  int threads = 0;                // 0 keeps the OpenMP default
  int bins = 10;

  // split
  double test_fraction = 0.1;
  double valid_fraction = 0.1;
  std::uint64_t seed = 2021;

  // train
  std::string method = "macr";
  std::string backbone = "mf";
  int layers = 2;
  std::size_t dim = 64;
  std::string head = "affine";
  std::size_t mlp_hidden = 0;
  bool heads_use_propagated = false;
  double alpha = 1e-3;
  double beta = 1e-3;
  double lr = 1e-3;
  double l2 = 1e-5;
  std::size_t batch_size = 1024;
  std::size_t epochs = 1000;
  std::size_t neg_ratio = 1;
  std::string c_grid = "20,22,24,26,28,30,32,34,36,38,40";
  std::size_t eval_every = 0;
  int eval_k = 20;
  std::string eval_metric = "hr";
  bool keep_best = false;
  bool no_user_branch = false;
  bool no_item_branch = false;
  bool no_l_u = false;
  bool no_l_i = false;
  double ipw_smoothing = 1.0;
  double ipw_clip_quantile = 0.95;
  double reg_lambda = 1e-4;

  // eval
  std::string ks = "20";
  std::string eval_mode = "te";
  double c = 0.0;

  static ExperimentConfig from_file(const std::string& path);
  /// Apply one key = value pair; throws UsageError on unknown keys.
  void apply(const std::string& key, const std::string& value);
  /// Write the fully resolved config (defaults filled) for provenance.
  void save(const std::string& path) const;

  TrainConfig train_config() const;
  SplitSpec split_spec() const;
  char delimiter_char() const;
  std::vector<int> ks_list() const;
  std::vector<double> c_grid_list() const;
};

}  // namespace macr
