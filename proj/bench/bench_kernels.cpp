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
// Serial reference vs OpenMP kernels on a news-scale workload.
#include <benchmark/benchmark.h>

#include "macr/backbone.hpp"
#include "macr/eval.hpp"
#include "macr/model.hpp"
#include "macr/synth.hpp"

namespace {

struct Workload {
  macr::InteractionDataset data;
  macr::NormalizedAdjacency adj;
  macr::EmbeddingTable users;
  macr::EmbeddingTable items;
  macr::MacrModel model;
  std::vector<std::uint32_t> eval_users;
  std::vector<std::vector<std::uint32_t>> excluded;
};

const Workload& workload() {
  static const Workload w = [] {
    Workload out;
    macr::SynthSpec spec;
    spec.n_users = 4000;
    spec.n_items = 600;
    spec.n_interactions = 40000;
    spec.rng_seed = 1;
    out.data = macr::generate_synthetic(spec);
    out.adj = macr::NormalizedAdjacency::build(out.data);
    out.users = macr::xavier_init(spec.n_users, 64, 2);
    out.items = macr::xavier_init(spec.n_items, 64, 3);

    macr::ModelInit init;
    init.dim = 64;
    init.rng_seed = 4;
    out.model = macr::MacrModel::make(spec.n_users, spec.n_items, init);
    for (std::uint32_t u = 0; u < 1000; ++u) {
      out.eval_users.push_back(u);
      out.excluded.push_back(out.data.user_items[u]);
    }
    return out;
  }();
  return w;
}

void bm_propagate_serial(benchmark::State& state) {
  const auto& w = workload();
  macr::EmbeddingTable uo, io;
  for (auto _ : state) {
    macr::lightgcn_propagate_serial(w.users, w.items, w.adj, 2, uo, io);
    benchmark::DoNotOptimize(uo.values.data());
  }
}

void bm_propagate_openmp(benchmark::State& state) {
  const auto& w = workload();
  macr::EmbeddingTable uo, io;
  for (auto _ : state) {
    macr::lightgcn_propagate(w.users, w.items, w.adj, 2, uo, io);
    benchmark::DoNotOptimize(uo.values.data());
  }
}

void bm_rank_serial(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    auto r = macr::rank_all_items_serial(w.model, 1.0, w.eval_users, w.excluded, 20);
    benchmark::DoNotOptimize(r.lists.data());
  }
}

void bm_rank_openmp(benchmark::State& state) {
  const auto& w = workload();
  for (auto _ : state) {
    auto r = macr::rank_all_items(w.model, 1.0, w.eval_users, w.excluded, 20);
    benchmark::DoNotOptimize(r.lists.data());
  }
}

}  // namespace

BENCHMARK(bm_propagate_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_propagate_openmp)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_rank_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_rank_openmp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
