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

#include "forge/dataset_forge.hpp"
#include "forge/knn_index.hpp"
#include "forge/recurrence_graph.hpp"
#include "forge/synth.hpp"

namespace forge {
namespace {

void BM_BuildGraph(benchmark::State& state) {
  PlantedGroupsSpec spec;
  spec.groups = static_cast<std::uint32_t>(state.range(0));
  const auto c = planted_groups(spec);
  auto m = std::make_shared<const FeatureMatrix>(c.features);
  IndexConfig cfg;
  cfg.mode = IndexMode::kPartitioned;
  auto index = build_partitioned(m, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(build_graph(*index, c.records, GraphOptions{}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.records.size()));
}
BENCHMARK(BM_BuildGraph)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_AssembleExamples(benchmark::State& state) {
  PlantedGroupsSpec spec;
  const auto c = planted_groups(spec);
  auto index = build_exact(std::make_shared<const FeatureMatrix>(c.features));
  const auto g = build_graph(*index, c.records, GraphOptions{});
  for (auto _ : state) {
    benchmark::DoNotOptimize(assemble_examples(g, c.records, Task::kInsertion));
  }
}
BENCHMARK(BM_AssembleExamples)->Unit(benchmark::kMillisecond);

void BM_ComposeGrid(benchmark::State& state) {
  const Image tile(kTileSize, kTileSize, 3, 128);
  const std::vector<Image> refs(3, tile);
  for (auto _ : state) benchmark::DoNotOptimize(compose_grid(tile, refs));
}
BENCHMARK(BM_ComposeGrid)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace forge

BENCHMARK_MAIN();
