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
#include "macr/config.hpp"

#include <fstream>
#include <sstream>

#include "macr/error.hpp"

namespace macr {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("expected a boolean, got: " + v);
}

template <typename T>
T parse_number(const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (in.fail()) throw UsageError("expected a number, got: " + v);
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  ExperimentConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;  // sections organize, keys decide
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + " is not key = value");
    cfg.apply(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

void ExperimentConfig::apply(const std::string& key, const std::string& value) {
  if (key == "data") data = value;
  else if (key == "delimiter") delimiter = value;
  else if (key == "split_dir") split_dir = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "threads") threads = parse_number<int>(value);
  else if (key == "bins") bins = parse_number<int>(value);
  else if (key == "test_fraction") test_fraction = parse_number<double>(value);
  else if (key == "valid_fraction") valid_fraction = parse_number<double>(value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(value);
  else if (key == "method") method = value;
  else if (key == "backbone") backbone = value;
  else if (key == "layers") layers = parse_number<int>(value);
  else if (key == "dim") dim = parse_number<std::size_t>(value);
  else if (key == "head") head = value;
  else if (key == "mlp_hidden") mlp_hidden = parse_number<std::size_t>(value);
  else if (key == "heads_use_propagated") heads_use_propagated = parse_bool(value);
  else if (key == "alpha") alpha = parse_number<double>(value);
  else if (key == "beta") beta = parse_number<double>(value);
  else if (key == "lr") lr = parse_number<double>(value);
  else if (key == "l2") l2 = parse_number<double>(value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(value);
  else if (key == "epochs") epochs = parse_number<std::size_t>(value);
  else if (key == "neg_ratio") neg_ratio = parse_number<std::size_t>(value);
  else if (key == "c_grid") c_grid = value;
  else if (key == "eval_every") eval_every = parse_number<std::size_t>(value);
  else if (key == "eval_k") eval_k = parse_number<int>(value);
  else if (key == "eval_metric") eval_metric = value;
  else if (key == "keep_best") keep_best = parse_bool(value);
  else if (key == "no_user_branch") no_user_branch = parse_bool(value);
  else if (key == "no_item_branch") no_item_branch = parse_bool(value);
  else if (key == "no_l_u") no_l_u = parse_bool(value);
  else if (key == "no_l_i") no_l_i = parse_bool(value);
  else if (key == "ipw_smoothing") ipw_smoothing = parse_number<double>(value);
  else if (key == "ipw_clip_quantile") ipw_clip_quantile = parse_number<double>(value);
  else if (key == "reg_lambda") reg_lambda = parse_number<double>(value);
  else if (key == "ks") ks = value;
  else if (key == "eval_mode") eval_mode = value;
  else if (key == "c") c = parse_number<double>(value);
  else throw UsageError("unknown config key: " + key);
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write config echo: " + path);
  out << "[data]\n";
  out << "data = " << data << "\n";
  out << "delimiter = " << delimiter << "\n";
  out << "split_dir = " << split_dir << "\n";
  out << "out_dir = " << out_dir << "\n";
  out << "checkpoint = " << checkpoint << "\n";
  out << "threads = " << threads << "\n";
  out << "bins = " << bins << "\n";
  out << "\n[split]\n";
  out << "test_fraction = " << test_fraction << "\n";
  out << "valid_fraction = " << valid_fraction << "\n";
  out << "seed = " << seed << "\n";
  out << "\n[train]\n";
  out << "method = " << method << "\n";
  out << "backbone = " << backbone << "\n";
  out << "layers = " << layers << "\n";
  out << "dim = " << dim << "\n";
  out << "head = " << head << "\n";
  out << "mlp_hidden = " << mlp_hidden << "\n";
  out << "heads_use_propagated = " << (heads_use_propagated ? "true" : "false") << "\n";
  out << "alpha = " << alpha << "\n";
  out << "beta = " << beta << "\n";
  out << "lr = " << lr << "\n";
  out << "l2 = " << l2 << "\n";
  out << "batch_size = " << batch_size << "\n";
  out << "epochs = " << epochs << "\n";
  out << "neg_ratio = " << neg_ratio << "\n";
  out << "c_grid = " << c_grid << "\n";
  out << "eval_every = " << eval_every << "\n";
  out << "eval_k = " << eval_k << "\n";
  out << "eval_metric = " << eval_metric << "\n";
  out << "keep_best = " << (keep_best ? "true" : "false") << "\n";
  out << "no_user_branch = " << (no_user_branch ? "true" : "false") << "\n";
  out << "no_item_branch = " << (no_item_branch ? "true" : "false") << "\n";
  out << "no_l_u = " << (no_l_u ? "true" : "false") << "\n";
  out << "no_l_i = " << (no_l_i ? "true" : "false") << "\n";
  out << "ipw_smoothing = " << ipw_smoothing << "\n";
  out << "ipw_clip_quantile = " << ipw_clip_quantile << "\n";
  out << "reg_lambda = " << reg_lambda << "\n";
  out << "\n[eval]\n";
  out << "ks = " << ks << "\n";
  out << "eval_mode = " << eval_mode << "\n";
  out << "c = " << c << "\n";
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig cfg;
  cfg.method = method_from_string(method);
  cfg.backbone = backbone_from_string(backbone);
  cfg.gcn_layers = layers;
  cfg.embedding_dim = dim;
  cfg.head = head_from_string(head);
  cfg.mlp_hidden = mlp_hidden;
  cfg.heads_use_propagated = heads_use_propagated;
  cfg.alpha = alpha;
  cfg.beta = beta;
  cfg.learning_rate = lr;
  cfg.l2_coeff = l2;
  cfg.batch_size = batch_size;
  cfg.epochs = epochs;
  cfg.neg_ratio = neg_ratio;
  cfg.rng_seed = seed;
  cfg.c_grid = c_grid_list();
  cfg.use_user_branch = !no_user_branch;
  cfg.use_item_branch = !no_item_branch;
  cfg.use_l_u = !no_l_u;
  cfg.use_l_i = !no_l_i;
  cfg.eval_every = eval_every;
  cfg.eval_k = eval_k;
  cfg.eval_metric = metric_from_string(eval_metric);
  cfg.keep_best = keep_best;
  cfg.ipw_smoothing = ipw_smoothing;
  cfg.ipw_clip_quantile = ipw_clip_quantile;
  cfg.reg_lambda = reg_lambda;
  return cfg;
}

SplitSpec ExperimentConfig::split_spec() const {
  return SplitSpec{test_fraction, valid_fraction, seed};
}

char ExperimentConfig::delimiter_char() const {
  if (delimiter == "tab" || delimiter == "\\t") return '\t';
  if (delimiter == "comma") return ',';
  if (delimiter == "space") return ' ';
  if (delimiter.size() == 1) return delimiter[0];
  throw UsageError("delimiter must be tab, comma, space, or a single character");
}

std::vector<int> ExperimentConfig::ks_list() const {
  std::vector<int> out;
  std::istringstream in(ks);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    out.push_back(parse_number<int>(t));
  }
  if (out.empty()) throw UsageError("ks must list at least one cutoff");
  return out;
}

std::vector<double> ExperimentConfig::c_grid_list() const {
  std::vector<double> out;
  std::istringstream in(c_grid);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    out.push_back(parse_number<double>(t));
  }
  if (out.empty()) throw UsageError("c_grid must list at least one value");
  return out;
}

}  // namespace macr
