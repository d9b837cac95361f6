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

#include <algorithm>
#include <cmath>

#include "macr/dataset.hpp"
#include "macr/error.hpp"
#include "test_util.hpp"

using namespace macr;
using macr::testing::TempDir;
using macr::testing::random_dataset;
using macr::testing::write_file;

TEST_CASE("load_interactions collapses duplicates and remaps ids") {
  TempDir dir("macr-load");
  write_file(dir.file("log.txt"), "a\tx\na\tx\nb\ty\n");
  const auto loaded = load_interactions(dir.file("log.txt"));
  CHECK(loaded.data.n_users == 2);
  CHECK(loaded.data.n_items == 2);
  CHECK(loaded.data.n_positives() == 2);
  CHECK(loaded.ids.users == std::vector<std::string>{"a", "b"});
  CHECK(loaded.ids.items == std::vector<std::string>{"x", "y"});
  CHECK(loaded.data.has_positive(0, 0));
  CHECK(loaded.data.has_positive(1, 1));
  CHECK_FALSE(loaded.data.has_positive(0, 1));
}

TEST_CASE("load_interactions skips comments and supports delimiters") {
  TempDir dir("macr-load");
  write_file(dir.file("log.csv"), "# header\nu1,i1\n\nu2,i2\n");
  const auto loaded = load_interactions(dir.file("log.csv"), ',');
  CHECK(loaded.data.n_users == 2);
  CHECK(loaded.data.n_positives() == 2);
}

TEST_CASE("load_interactions errors") {
  TempDir dir("macr-load");
  CHECK_THROWS_AS(load_interactions(dir.file("absent.txt")), DataError);

  write_file(dir.file("empty.txt"), "");
  CHECK_THROWS_WITH_AS(load_interactions(dir.file("empty.txt")),
                       doctest::Contains("zero users or zero items"), DataError);

  write_file(dir.file("bad.txt"), "a\tx\nnotabs\n");
  CHECK_THROWS_WITH_AS(load_interactions(dir.file("bad.txt")), doctest::Contains("line 2"),
                       DataError);
}

TEST_CASE("adjacency lists invert the positives") {
  const auto data = random_dataset(23, 11, 120, 99);
  std::vector<Interaction> rebuilt;
  for (std::size_t u = 0; u < data.n_users; ++u)
    for (auto i : data.user_items[u]) rebuilt.push_back({static_cast<std::uint32_t>(u), i});
  std::sort(rebuilt.begin(), rebuilt.end());
  CHECK(rebuilt == data.positives);

  std::vector<Interaction> from_items;
  for (std::size_t i = 0; i < data.n_items; ++i)
    for (auto u : data.item_users[i]) from_items.push_back({u, static_cast<std::uint32_t>(i)});
  std::sort(from_items.begin(), from_items.end());
  CHECK(from_items == data.positives);
}

namespace {

InteractionDataset grid_dataset(std::size_t n_users, std::size_t per_user, std::size_t n_items) {
  std::vector<Interaction> pairs;
  for (std::size_t u = 0; u < n_users; ++u)
    for (std::size_t k = 0; k < per_user; ++k)
      pairs.push_back({static_cast<std::uint32_t>(u),
                       static_cast<std::uint32_t>((u + k) % n_items)});
  return InteractionDataset::from_pairs(n_users, n_items, std::move(pairs));
}

}  // namespace

TEST_CASE("split sizes use floor of the fractions") {
  const auto data = grid_dataset(25, 4, 10);  // 100 positives
  REQUIRE(data.n_positives() == 100);
  const auto split = build_debiased_split(data, {0.1, 0.1, 3});
  CHECK(split.test.size() == 10);
  CHECK(split.valid.size() == 10);
  CHECK(split.train.n_positives() == 80);
}

TEST_CASE("split partitions the positives and is deterministic") {
  const auto data = random_dataset(40, 15, 300, 7);
  const SplitSpec spec{0.15, 0.1, 42};
  const auto split = build_debiased_split(data, spec);

  std::vector<Interaction> all = split.train.positives;
  all.insert(all.end(), split.valid.begin(), split.valid.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  std::sort(all.begin(), all.end());
  CHECK(all == data.positives);  // disjoint union: sizes add up and the sort has no duplicates
  CHECK(all.size() == split.train.n_positives() + split.valid.size() + split.test.size());

  const auto again = build_debiased_split(data, spec);
  CHECK(again.train.positives == split.train.positives);
  CHECK(again.valid == split.valid);
  CHECK(again.test == split.test);

  const auto other = build_debiased_split(data, {0.15, 0.1, 43});
  CHECK(other.test != split.test);
}

TEST_CASE("split rejects bad inputs") {
  const auto data = grid_dataset(25, 4, 10);
  CHECK_THROWS_AS(build_debiased_split(data, {0.6, 0.5, 1}), UsageError);

  std::vector<Interaction> pairs = {{0, 0}, {1, 0}};
  const auto sparse = InteractionDataset::from_pairs(2, 2, std::move(pairs));
  CHECK_THROWS_AS(build_debiased_split(sparse, {0.5, 0.25, 1}), DataError);
}

TEST_CASE("test sampling is uniform over items, not interactions") {
  // Item 0 carries 200 interactions, item 1 only 50. Item-uniform draws give
  // both items the same expected test count.
  std::vector<Interaction> pairs;
  for (std::uint32_t u = 0; u < 200; ++u) pairs.push_back({u, 0});
  for (std::uint32_t u = 0; u < 50; ++u) pairs.push_back({u, 1});
  const auto data = InteractionDataset::from_pairs(200, 2, std::move(pairs));
  REQUIRE(data.n_positives() == 250);

  std::size_t count0 = 0, count1 = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto split = build_debiased_split(data, {0.16, 0.04, seed});  // 40 test draws
    for (const auto& p : split.test) (p.item == 0 ? count0 : count1)++;
  }
  const double rel_diff = std::abs(static_cast<double>(count0) - static_cast<double>(count1)) /
                          (0.5 * static_cast<double>(count0 + count1));
  CHECK(rel_diff < 0.05);
  // An interaction-proportional sampler would put ~4x more mass on item 0.
  CHECK(count1 > 0.8 * count0);
}

TEST_CASE("sample_negatives emits labeled pairs that avoid train positives") {
  std::vector<Interaction> pairs = {{0, 0}};
  const auto data = InteractionDataset::from_pairs(1, 3, std::move(pairs));
  const auto examples = sample_negatives(data, 1, 5);
  REQUIRE(examples.size() == 2);
  CHECK(examples[0].label == 1.0f);
  CHECK(examples[1].label == 0.0f);
  CHECK(examples[1].item != 0);

  const auto big = random_dataset(30, 12, 200, 3);
  for (const auto& ex : sample_negatives(big, 2, 11))
    if (ex.label == 0.0f) CHECK_FALSE(big.has_positive(ex.user, ex.item));
}

TEST_CASE("sample_negatives rejects saturated users") {
  std::vector<Interaction> pairs = {{0, 0}, {0, 1}, {1, 0}};
  const auto data = InteractionDataset::from_pairs(2, 2, std::move(pairs));
  CHECK_THROWS_WITH_AS(sample_negatives(data, 1, 1), doctest::Contains("user 0"), DataError);
}

TEST_CASE("negative items are uniform over the non-interacted set") {
  // User 0 interacted with items {0, 1}; its negatives live in {2, ..., 6}.
  std::vector<Interaction> pairs = {{0, 0}, {0, 1}};
  for (std::uint32_t i = 0; i < 6; ++i) pairs.push_back({1, i});
  pairs.push_back({2, 6});
  const auto data = InteractionDataset::from_pairs(3, 7, std::move(pairs));

  std::vector<std::size_t> counts(7, 0);
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed)
    for (const auto& ex : sample_negatives(data, 1, seed))
      if (ex.label == 0.0f && ex.user == 0) {
        ++counts[ex.item];
        ++total;
      }
  CHECK(counts[0] == 0);
  CHECK(counts[1] == 0);
  // Chi-square against uniform over the 5 allowed items; 4 dof, p > 0.01
  // corresponds to a statistic below 13.277.
  const double expected = static_cast<double>(total) / 5.0;
  double chi2 = 0.0;
  for (std::size_t i = 2; i < 7; ++i) {
    const double diff = static_cast<double>(counts[i]) - expected;
    chi2 += diff * diff / expected;
  }
  CHECK(chi2 < 13.277);
}

TEST_CASE("item popularity counts and grouping") {
  std::vector<Interaction> pairs = {{0, 0}, {1, 0}, {0, 1}};
  const auto data = InteractionDataset::from_pairs(2, 2, std::move(pairs));
  const auto profile = item_popularity(data);
  CHECK(profile.item_counts == std::vector<std::uint32_t>{2, 1});

  const auto flat = item_popularity(grid_dataset(10, 2, 10));
  CHECK(flat.n_groups == 1);
  for (int g : flat.group_of_item) CHECK(g == 0);

  const auto big = random_dataset(50, 20, 400, 21);
  const auto bp = item_popularity(big, 10);
  std::size_t sum = 0;
  for (auto c : bp.item_counts) sum += c;
  CHECK(sum == big.n_positives());
  for (std::size_t i = 0; i < bp.group_of_item.size(); ++i) {
    CHECK(bp.group_of_item[i] >= 0);
    CHECK(bp.group_of_item[i] < bp.n_groups);
  }
}

TEST_CASE("user activity mirrors item popularity on the user side") {
  const auto big = random_dataset(50, 20, 400, 22);
  const auto profile = user_activity(big, 5);
  std::size_t sum = 0;
  for (auto c : profile.item_counts) sum += c;
  CHECK(sum == big.n_positives());
  CHECK(profile.group_of_item.size() == big.n_users);
}

TEST_CASE("save_split and load_split round trip deterministically") {
  const auto data = random_dataset(30, 12, 150, 5);
  const auto split = build_debiased_split(data, {0.1, 0.1, 9});
  TempDir dir("macr-split");
  IdMap ids;  // dense sources carry no remap tables
  save_split(split, ids, 9, dir.file("a"));
  save_split(split, ids, 9, dir.file("b"));
  for (const char* name : {"train.txt", "valid.txt", "test.txt", "split.jsonl"})
    CHECK(macr::testing::read_file(dir.file("a") + "/" + name) ==
          macr::testing::read_file(dir.file("b") + "/" + name));

  const auto loaded = load_split(dir.file("a"));
  CHECK(loaded.n_users == split.n_users);
  CHECK(loaded.n_items == split.n_items);
  CHECK(loaded.train.positives == split.train.positives);
  CHECK(loaded.valid == split.valid);
  CHECK(loaded.test == split.test);

  CHECK_THROWS_AS(load_split(dir.file("missing")), DataError);
}
