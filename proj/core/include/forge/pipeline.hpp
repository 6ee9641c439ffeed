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


// End-to-end run: index, graph, stats and dataset emission with one seed.
//
// Each stage has a key hashed from its inputs and parameters. The keys and
// the hashes of the files each stage wrote are kept in <out>/pipeline_cache.json;
// a stage whose key and outputs are unchanged is skipped.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "forge/dataset_forge.hpp"
#include "forge/knn_index.hpp"
#include "forge/recurrence_graph.hpp"

namespace forge {

struct PipelineConfig {
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  SimilarityBand band;
  std::uint32_t k_max = 5;
  IndexConfig index;
  Task task = Task::kInsertion;
  std::uint64_t seed = 0;
  /// Defaults to <manifest dir>/sidecars when that directory exists.
  std::optional<std::filesystem::path> sidecar_dir;
  /// Defaults to the manifest directory.
  std::optional<std::filesystem::path> image_root;
  bool render_grids = false;
  bool strict_sidecars = false;
  bool use_cache = true;
  std::size_t threads = 0;

  void validate() const;
};

struct StageReport {
  std::string name;  // "index", "graph", "stats", "dataset"
  bool cached = false;
  std::string key;
  std::vector<std::filesystem::path> outputs;
};

struct PipelineResult {
  std::vector<StageReport> stages;
  RecurrenceStats stats;
  std::uint64_t examples = 0;
  std::uint64_t skipped = 0;
  std::uint64_t missing_scene = 0;
};

/// Errors keep their category and gain a "<stage> stage: " prefix.
PipelineResult pipeline_all(const PipelineConfig& config,
                            const std::function<void(const StageReport&)>& on_stage = {});

}  // namespace forge
