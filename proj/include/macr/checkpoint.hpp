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

#include "macr/model.hpp"

namespace macr {

/// Checkpoint layout (stable, little-endian):
///   "MACRCKPT1\n"
///   one-line JSON header (shapes, backbone, head kind, branch flags, epoch)
///   raw float64 blocks in order: user_emb, item_emb,
///     user_head {w1, b1, w2, b2}, item_head {w1, b1, w2, b2}, item_bias.
void save_checkpoint(const MacrModel& model, std::size_t epoch, const std::string& method,
                     const std::string& path);

struct LoadedCheckpoint {
  MacrModel model;
  std::size_t epoch = 0;
  std::string method;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace macr
