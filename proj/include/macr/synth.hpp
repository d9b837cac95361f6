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

#include "macr/dataset.hpp"

namespace macr {

/// Generator for popularity-skewed implicit-feedback logs. Interactions are
/// drawn per user without replacement with log-weights
///   gamma_u * log(zipf_i) + affinity_scale * <p_u, q_i> / sqrt(latent_dim),
/// i.e. a low-rank true preference surface distorted by item popularity with
/// a per-user conformity exponent. User activity is log-normal. The defaults
/// mirror a mid-sized news dataset (13485 x 744, 116321 interactions).
struct SynthSpec {
  std::size_t n_users = 13485;
  std::size_t n_items = 744;
  std::size_t n_interactions = 116321;
  std::size_t latent_dim = 16;
  double affinity_scale = 3.0;
  double pop_exponent = 1.0;
  double pop_offset = 0.0;   // Zipf rank offset; > 0 fattens the tail
  double pop_uniform_mix = 0.0;  // blend weight of a uniform exposure floor
  double conformity_sigma = 0.5;
  double activity_sigma = 0.9;
  std::uint64_t rng_seed = 7;
};

/// Generator internals, exposed for tests that need the ground truth.
struct SynthDebug {
  std::vector<double> user_factors;  // n_users x latent_dim
  std::vector<double> item_factors;  // n_items x latent_dim
  std::vector<double> log_pop;       // per item
  std::vector<double> conformity;    // per user
};

/// Deterministic per seed. Every item ends with at least one interaction and
/// every user with at least one and at most n_items - 1.
InteractionDataset generate_synthetic(const SynthSpec& spec, SynthDebug* debug = nullptr);

/// Write `user<TAB>item` lines loadable by load_interactions.
void save_interactions(const InteractionDataset& data, const std::string& path);

}  // namespace macr
