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
#include "macr/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "macr/error.hpp"

namespace macr {

namespace {

constexpr const char* kMagic = "MACRCKPT1\n";

void write_block(std::ofstream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::ifstream& in, double* data, std::size_t n, const std::string& path) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
    throw DataError("truncated checkpoint: " + path);
}

}  // namespace

void save_checkpoint(const MacrModel& model, std::size_t epoch, const std::string& method,
                     const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);

  nlohmann::json header = {
      {"format", 1},
      {"rows_users", model.n_users()},
      {"rows_items", model.n_items()},
      {"dim", model.dim()},
      {"backbone", to_string(model.backbone)},
      {"layer_count", model.gcn_layers},
      {"head", to_string(model.user_head.kind)},
      {"mlp_hidden", model.user_head.hidden},
      {"has_user_branch", model.has_user_branch},
      {"has_item_branch", model.has_item_branch},
      {"heads_use_propagated", model.heads_use_propagated},
      {"has_item_bias", !model.item_bias.empty()},
      {"epoch", epoch},
      {"method", method},
  };
  out << kMagic << header.dump() << '\n';

  write_block(out, model.user_emb.values.data(), model.user_emb.values.size());
  write_block(out, model.item_emb.values.data(), model.item_emb.values.size());
  for (const BranchHead* head : {&model.user_head, &model.item_head}) {
    write_block(out, head->w1.data(), head->w1.size());
    write_block(out, head->b1.data(), head->b1.size());
    write_block(out, head->w2.data(), head->w2.size());
    write_block(out, &head->b2, 1);
  }
  write_block(out, model.item_bias.data(), model.item_bias.size());
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);

  std::string magic(10, '\0');
  in.read(magic.data(), 10);
  if (magic != kMagic) throw DataError("not a checkpoint file: " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint header in " + path + ": " + e.what());
  }

  ModelInit init;
  init.backbone = backbone_from_string(header.at("backbone").get<std::string>());
  init.gcn_layers = header.at("layer_count").get<int>();
  init.dim = header.at("dim").get<std::size_t>();
  init.head = head_from_string(header.at("head").get<std::string>());
  init.mlp_hidden = header.at("mlp_hidden").get<std::size_t>();
  init.user_branch = header.at("has_user_branch").get<bool>();
  init.item_branch = header.at("has_item_branch").get<bool>();
  init.heads_use_propagated = header.at("heads_use_propagated").get<bool>();
  init.item_bias = header.at("has_item_bias").get<bool>();

  LoadedCheckpoint loaded;
  loaded.model = MacrModel::make(header.at("rows_users").get<std::size_t>(),
                                 header.at("rows_items").get<std::size_t>(), init);
  loaded.epoch = header.at("epoch").get<std::size_t>();
  loaded.method = header.value("method", "");

  MacrModel& model = loaded.model;
  read_block(in, model.user_emb.values.data(), model.user_emb.values.size(), path);
  read_block(in, model.item_emb.values.data(), model.item_emb.values.size(), path);
  for (BranchHead* head : {&model.user_head, &model.item_head}) {
    read_block(in, head->w1.data(), head->w1.size(), path);
    read_block(in, head->b1.data(), head->b1.size(), path);
    read_block(in, head->w2.data(), head->w2.size(), path);
    read_block(in, &head->b2, 1, path);
  }
  read_block(in, model.item_bias.data(), model.item_bias.size(), path);
  return loaded;
}

}  // namespace macr
