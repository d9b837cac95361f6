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
#include "macr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "macr/error.hpp"
#include "macr/rng.hpp"

namespace macr {

InteractionDataset InteractionDataset::from_pairs(std::size_t n_users, std::size_t n_items,
                                                  std::vector<Interaction> pairs) {
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  InteractionDataset ds;
  ds.n_users = n_users;
  ds.n_items = n_items;
  ds.positives = std::move(pairs);
  ds.user_items.resize(n_users);
  ds.item_users.resize(n_items);
  for (const auto& p : ds.positives) {
    if (p.user >= n_users || p.item >= n_items)
      throw DataError("interaction index out of range: (" + std::to_string(p.user) + ", " +
                      std::to_string(p.item) + ")");
    ds.user_items[p.user].push_back(p.item);
    ds.item_users[p.item].push_back(p.user);
  }
  return ds;
}

bool InteractionDataset::has_positive(std::uint32_t user, std::uint32_t item) const {
  if (user >= n_users) return false;
  const auto& items = user_items[user];
  return std::binary_search(items.begin(), items.end(), item);
}

LoadedInteractions load_interactions(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interaction file: " + path);

  std::unordered_map<std::string, std::uint32_t> user_index, item_index;
  IdMap ids;
  std::vector<Interaction> pairs;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    auto pos = line.find(delimiter);
    if (pos == std::string::npos || pos == 0 || pos + 1 >= line.size())
      throw DataError("malformed interaction line " + std::to_string(line_no) + " in " + path);
    std::string user_tok = line.substr(0, pos);
    std::string item_tok = line.substr(pos + 1);
    if (item_tok.find(delimiter) != std::string::npos)
      throw DataError("malformed interaction line " + std::to_string(line_no) + " in " + path);

    auto [uit, unew] = user_index.try_emplace(user_tok, static_cast<std::uint32_t>(ids.users.size()));
    if (unew) ids.users.push_back(user_tok);
    auto [iit, inew] = item_index.try_emplace(item_tok, static_cast<std::uint32_t>(ids.items.size()));
    if (inew) ids.items.push_back(item_tok);
    pairs.push_back({uit->second, iit->second});
  }

  if (ids.users.empty() || ids.items.empty())
    throw DataError("zero users or zero items in " + path);

  LoadedInteractions out;
  out.data = InteractionDataset::from_pairs(ids.users.size(), ids.items.size(), std::move(pairs));
  out.ids = std::move(ids);
  return out;
}

DatasetSplit build_debiased_split(const InteractionDataset& data, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) ||
      !(spec.valid_fraction > 0.0 && spec.valid_fraction < 1.0) ||
      spec.test_fraction + spec.valid_fraction >= 1.0)
    throw UsageError("split fractions must lie in (0,1) and sum below 1");
  for (std::size_t i = 0; i < data.n_items; ++i)
    if (data.item_users[i].empty())
      throw DataError("item " + std::to_string(i) + " has no interactions; cannot split");

  const std::size_t total = data.n_positives();
  const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * static_cast<double>(total)));
  const auto n_valid = static_cast<std::size_t>(std::floor(spec.valid_fraction * static_cast<double>(total)));
  if (n_test + n_valid >= total) throw DataError("split fractions leave train empty");

  // Per-item pools of remaining interactions; sampled pairs are swap-popped.
  std::vector<std::vector<std::uint32_t>> pool(data.n_items);
  for (std::size_t i = 0; i < data.n_items; ++i) pool[i] = data.item_users[i];
  std::vector<std::uint32_t> live_items(data.n_items);
  for (std::size_t i = 0; i < data.n_items; ++i) live_items[i] = static_cast<std::uint32_t>(i);

  Rng rng(spec.rng_seed);
  auto draw = [&](std::vector<Interaction>& sink, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t slot = rng.uniform_index(live_items.size());
      const std::uint32_t item = live_items[slot];
      auto& users = pool[item];
      const std::size_t j = rng.uniform_index(users.size());
      sink.push_back({users[j], item});
      users[j] = users.back();
      users.pop_back();
      if (users.empty()) {
        live_items[slot] = live_items.back();
        live_items.pop_back();
      }
    }
  };

  DatasetSplit split;
  split.n_users = data.n_users;
  split.n_items = data.n_items;
  draw(split.test, n_test);
  draw(split.valid, n_valid);

  std::vector<Interaction> train_pairs;
  train_pairs.reserve(total - n_test - n_valid);
  for (std::size_t i = 0; i < data.n_items; ++i)
    for (std::uint32_t u : pool[i]) train_pairs.push_back({u, static_cast<std::uint32_t>(i)});
  split.train = InteractionDataset::from_pairs(data.n_users, data.n_items, std::move(train_pairs));

  std::sort(split.test.begin(), split.test.end());
  std::sort(split.valid.begin(), split.valid.end());
  return split;
}

std::vector<LabeledExample> sample_negatives(const InteractionDataset& train,
                                             std::size_t ratio, std::uint64_t rng_seed) {
  if (ratio < 1) throw UsageError("negative ratio must be >= 1");
  for (std::size_t u = 0; u < train.n_users; ++u)
    if (train.user_items[u].size() >= train.n_items)
      throw DataError("user " + std::to_string(u) +
                      " interacted with every item; negative sampling cannot terminate");

  Rng rng(rng_seed);
  std::vector<LabeledExample> out;
  out.reserve(train.n_positives() * (1 + ratio));
  for (const auto& p : train.positives) {
    out.push_back({p.user, p.item, 1.0f});
    for (std::size_t r = 0; r < ratio; ++r) {
      std::uint32_t j;
      do {
        j = static_cast<std::uint32_t>(rng.uniform_index(train.n_items));
      } while (train.has_positive(p.user, j));
      out.push_back({p.user, j, 0.0f});
    }
  }
  return out;
}

namespace {

PopularityProfile bucket_counts(std::vector<std::uint32_t> counts, int bins) {
  if (bins < 1) throw UsageError("popularity bins must be >= 1");
  PopularityProfile profile;
  profile.item_counts = std::move(counts);
  const auto [lo_it, hi_it] = std::minmax_element(profile.item_counts.begin(), profile.item_counts.end());
  const double lo = profile.item_counts.empty() ? 0.0 : static_cast<double>(*lo_it);
  const double hi = profile.item_counts.empty() ? 0.0 : static_cast<double>(*hi_it);

  if (hi <= lo) {
    profile.n_groups = 1;
    profile.group_upper_edges = {hi};
    profile.group_of_item.assign(profile.item_counts.size(), 0);
    return profile;
  }

  profile.n_groups = bins;
  const double width = (hi - lo) / bins;
  for (int g = 1; g <= bins; ++g) profile.group_upper_edges.push_back(lo + width * g);
  profile.group_of_item.resize(profile.item_counts.size());
  for (std::size_t i = 0; i < profile.item_counts.size(); ++i) {
    int g = static_cast<int>((profile.item_counts[i] - lo) / width);
    profile.group_of_item[i] = std::min(g, bins - 1);
  }
  return profile;
}

}  // namespace

PopularityProfile item_popularity(const InteractionDataset& train, int bins) {
  std::vector<std::uint32_t> counts(train.n_items, 0);
  for (std::size_t i = 0; i < train.n_items; ++i)
    counts[i] = static_cast<std::uint32_t>(train.item_users[i].size());
  return bucket_counts(std::move(counts), bins);
}

PopularityProfile user_activity(const InteractionDataset& train, int bins) {
  std::vector<std::uint32_t> counts(train.n_users, 0);
  for (std::size_t u = 0; u < train.n_users; ++u)
    counts[u] = static_cast<std::uint32_t>(train.user_items[u].size());
  return bucket_counts(std::move(counts), bins);
}

namespace {

void write_pairs(const std::string& path, const std::vector<Interaction>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& p : pairs) out << p.user << '\t' << p.item << '\n';
}

std::vector<Interaction> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file: " + path);
  std::vector<Interaction> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::uint32_t u, i;
    if (std::sscanf(line.c_str(), "%u\t%u", &u, &i) != 2)
      throw DataError("malformed split line " + std::to_string(line_no) + " in " + path);
    pairs.push_back({u, i});
  }
  return pairs;
}

void write_id_table(const std::string& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (std::size_t k = 0; k < ids.size(); ++k) out << k << '\t' << ids[k] << '\n';
}

}  // namespace

void save_split(const DatasetSplit& split, const IdMap& ids, std::uint64_t seed,
                const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_pairs(dir + "/train.txt", split.train.positives);
  write_pairs(dir + "/valid.txt", split.valid);
  write_pairs(dir + "/test.txt", split.test);
  if (!ids.users.empty()) write_id_table(dir + "/user_ids.txt", ids.users);
  if (!ids.items.empty()) write_id_table(dir + "/item_ids.txt", ids.items);

  nlohmann::json sidecar = {
      {"n_users", split.n_users},
      {"n_items", split.n_items},
      {"counts",
       {{"train", split.train.n_positives()}, {"valid", split.valid.size()}, {"test", split.test.size()}}},
      {"seed", seed},
  };
  std::ofstream out(dir + "/split.jsonl", std::ios::binary);
  if (!out) throw DataError("cannot write " + dir + "/split.jsonl");
  out << sidecar.dump() << '\n';
}

DatasetSplit load_split(const std::string& dir) {
  std::ifstream side(dir + "/split.jsonl");
  if (!side) throw DataError("missing split sidecar: " + dir + "/split.jsonl");
  nlohmann::json sidecar;
  try {
    side >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad split sidecar in " + dir + ": " + e.what());
  }

  DatasetSplit split;
  split.n_users = sidecar.at("n_users").get<std::size_t>();
  split.n_items = sidecar.at("n_items").get<std::size_t>();
  split.train = InteractionDataset::from_pairs(split.n_users, split.n_items,
                                               read_pairs(dir + "/train.txt"));
  split.valid = read_pairs(dir + "/valid.txt");
  split.test = read_pairs(dir + "/test.txt");
  for (const auto& p : split.valid)
    if (p.user >= split.n_users || p.item >= split.n_items)
      throw DataError("valid interaction out of range in " + dir);
  for (const auto& p : split.test)
    if (p.user >= split.n_users || p.item >= split.n_items)
      throw DataError("test interaction out of range in " + dir);
  return split;
}

}  // namespace macr
