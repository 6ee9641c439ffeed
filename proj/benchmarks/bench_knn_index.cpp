// Copyright 2026 The Forge Authors
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


#include <memory>

#include <benchmark/benchmark.h>

#include "forge/feature_store.hpp"
#include "forge/knn_index.hpp"
#include "forge/synth.hpp"

namespace forge {
namespace {

std::shared_ptr<const FeatureMatrix> corpus(std::uint64_t n, std::uint32_t dim) {
  return std::make_shared<const FeatureMatrix>(random_unit_vectors(n, dim, 1));
}

void BM_ExactQuery(benchmark::State& state) {
  auto m = corpus(static_cast<std::uint64_t>(state.range(0)), 64);
  auto index = build_exact(m);
  std::uint64_t row = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index->query(row, 16));
    row = (row + 1) % m->count();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ExactQuery)->Arg(10000)->Arg(50000);

void BM_PartitionedQuery(benchmark::State& state) {
  auto m = corpus(static_cast<std::uint64_t>(state.range(0)), 64);
  IndexConfig cfg;
  cfg.mode = IndexMode::kPartitioned;
  auto index = build_partitioned(m, cfg);
  std::uint64_t row = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index->query(row, 16));
    row = (row + 1) % m->count();
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PartitionedQuery)->Arg(10000)->Arg(50000);

void BM_PartitionedBuild(benchmark::State& state) {
  auto m = corpus(static_cast<std::uint64_t>(state.range(0)), 64);
  IndexConfig cfg;
  cfg.mode = IndexMode::kPartitioned;
  for (auto _ : state) benchmark::DoNotOptimize(build_partitioned(m, cfg));
}
BENCHMARK(BM_PartitionedBuild)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Dot(benchmark::State& state) {
  const auto m = random_unit_vectors(2, static_cast<std::uint32_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(dot(m.row(0), m.row(1)));
}
BENCHMARK(BM_Dot)->Arg(64)->Arg(128)->Arg(512);

void BM_Normalize(benchmark::State& state) {
  const auto m = random_unit_vectors(10000, 128, 3);
  for (auto _ : state) benchmark::DoNotOptimize(normalize(m));
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_Normalize)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace forge
