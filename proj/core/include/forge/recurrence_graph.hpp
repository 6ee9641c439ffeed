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

// Sparse band-filtered kNN graph over detected objects.
//
// Each object keeps at most k_max neighbors whose cosine similarity lies in
// [lo, hi]. Pairs above hi are treated as near-duplicates and pairs below lo
// as different objects. Neighbors cropped from the same source image are
// never kept. Edges are directional.
//
// neighbors.jsonl: {"id": 7, "nn": [{"id": 12, "sim": 0.951}, ...]}, one
// line per object with at least one neighbor, ascending id.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "forge/feature_store.hpp"
#include "forge/knn_index.hpp"

namespace forge {

struct SimilarityBand {
  double lo = 0.93;
  double hi = 0.975;

  /// Throws unless -1 <= lo < hi <= 1.
  void validate() const;
  /// Inclusive on both ends, compared at float precision so a stored 0.975f
  /// is inside a band whose hi is 0.975.
  bool contains(float sim) const noexcept {
    return sim >= static_cast<float>(lo) && sim <= static_cast<float>(hi);
  }
};

/// Entries of `list` inside the band, order preserved.
NeighborList filter_band(const NeighborList& list, const SimilarityBand& band);

struct GraphNode {
  ObjectId id = 0;
  std::vector<Neighbor> neighbors;  // Neighbor::id is an object id here

  friend bool operator==(const GraphNode&, const GraphNode&) = default;
};

struct KnnGraph {
  SimilarityBand band;
  std::uint32_t k_max = 5;
  /// Nodes with at least one retained neighbor, ascending id.
  std::vector<GraphNode> nodes;

  /// Neighbors of `id`, empty when the object has none.
  std::span<const Neighbor> neighbors_of(ObjectId id) const;
  std::size_t degree(ObjectId id) const { return neighbors_of(id).size(); }
  std::uint64_t edge_count() const;
};

struct GraphOptions {
  SimilarityBand band;
  std::uint32_t k_max = 5;
  /// Candidates fetched per object before filtering.
  std::uint32_t search_k = 16;
  std::size_t threads = 0;
};

/// Row-to-record lookup: position of the record that owns each index row.
/// Throws when the records do not cover the rows one-to-one.
std::vector<std::size_t> rows_to_records(std::span<const ObjectRecord> records,
                                         std::uint64_t row_count);

KnnGraph build_graph(const Index& index, std::span<const ObjectRecord> records,
                     const GraphOptions& options);

void write_graph(const std::filesystem::path& path, const KnnGraph& graph);
/// Reads neighbors.jsonl. Band and k_max come from the sidecar
/// `<stem>.meta.json` when present, else the defaults.
KnnGraph read_graph(const std::filesystem::path& path);

struct RecurrenceStats {
  std::uint64_t num_images = 0;
  std::uint64_t num_objects = 0;
  std::uint64_t count_ge1 = 0;
  std::uint64_t count_ge3 = 0;
  double pct_ge1 = 0.0;
  double pct_ge3 = 0.0;
};

/// 100 * count / total rounded half-up to one decimal; 0 when total is 0.
double percent_1dp(std::uint64_t count, std::uint64_t total);
/// percent_1dp rendered as "8.2%".
std::string format_percent(std::uint64_t count, std::uint64_t total);

RecurrenceStats degree_stats(const KnnGraph& graph,
                             std::span<const ObjectRecord> records);
/// Stats from already-known counts (e.g. published corpus tables).
RecurrenceStats stats_from_counts(std::uint64_t num_images,
                                  std::uint64_t num_objects,
                                  std::uint64_t count_ge1,
                                  std::uint64_t count_ge3);

}  // namespace forge
