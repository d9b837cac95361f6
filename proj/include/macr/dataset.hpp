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

namespace macr {

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  friend bool operator==(const Interaction&, const Interaction&) = default;
  friend auto operator<=>(const Interaction&, const Interaction&) = default;
};

/// Implicit-feedback interaction matrix in sparse form. `positives` is kept
/// sorted by (user, item) and duplicate-free; the two adjacency lists are
/// exact inversions of it.
struct InteractionDataset {
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::vector<Interaction> positives;
  std::vector<std::vector<std::uint32_t>> user_items;
  std::vector<std::vector<std::uint32_t>> item_users;

  /// Build from a pair list: sorts, drops duplicates, fills adjacencies.
  static InteractionDataset from_pairs(std::size_t n_users, std::size_t n_items,
                                       std::vector<Interaction> pairs);

  bool has_positive(std::uint32_t user, std::uint32_t item) const;
  std::size_t n_positives() const { return positives.size(); }
};

/// Dense index -> raw token tables produced by load_interactions.
struct IdMap {
  std::vector<std::string> users;
  std::vector<std::string> items;
};

struct LoadedInteractions {
  InteractionDataset data;
  IdMap ids;
};

/// Parse `user<delim>item` lines; `#` lines and blank lines are skipped.
/// Raw IDs are remapped to dense zero-based indices in first-appearance
/// order; duplicate pairs collapse to one positive.
LoadedInteractions load_interactions(const std::string& path, char delimiter = '\t');

struct SplitSpec {
  double test_fraction = 0.1;
  double valid_fraction = 0.1;
  std::uint64_t rng_seed = 0;
};

struct DatasetSplit {
  InteractionDataset train;
  std::vector<Interaction> valid;
  std::vector<Interaction> test;
  std::size_t n_users = 0;  // shared index space across the three parts
  std::size_t n_items = 0;
};

/// Debiased split: test then valid interactions drawn item-uniformly --
/// repeatedly pick an item uniformly among items with remaining interactions,
/// then one of its remaining interactions uniformly. Counts are
/// floor(fraction * |positives|); the remainder stays in train.
DatasetSplit build_debiased_split(const InteractionDataset& data, const SplitSpec& spec);

struct LabeledExample {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  float label = 0.0f;
};

/// For each train positive emit the positive (label 1) plus `ratio` uniform
/// negatives over the user's non-interacted items (label 0).
std::vector<LabeledExample> sample_negatives(const InteractionDataset& train,
                                             std::size_t ratio, std::uint64_t rng_seed);

struct PopularityProfile {
  std::vector<std::uint32_t> item_counts;   // train interactions per item
  std::vector<double> group_upper_edges;    // ascending bin upper edges
  std::vector<int> group_of_item;
  int n_groups = 0;
};

/// Train-set popularity counts, bucketed into equal-width bins over the
/// count range (degenerate range collapses to a single group).
PopularityProfile item_popularity(const InteractionDataset& train, int bins = 10);

/// Same bucketing applied to per-user train interaction counts.
PopularityProfile user_activity(const InteractionDataset& train, int bins = 10);

/// Writes train.txt/valid.txt/test.txt (dense indices, tab-separated),
/// user_ids.txt/item_ids.txt remap tables, and a split.jsonl sidecar.
void save_split(const DatasetSplit& split, const IdMap& ids, std::uint64_t seed,
                const std::string& dir);

/// Load a directory produced by save_split. Indices are read as-is; the
/// sidecar fixes the index space so the three parts stay aligned.
DatasetSplit load_split(const std::string& dir);

}  // namespace macr
