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

// Top-k cosine retrieval over a normalized FeatureMatrix.
//
// Two backends share one query contract:
//  - ExactIndex scans every row.
//  - PartitionedIndex is an inverted file: rows are bucketed by their nearest
//    k-means centroid and a query scans only the `probes` closest buckets.
//
// Ids returned by an index are row numbers of the matrix it was built on.
// Results are ordered by similarity descending, ties by ascending id, and
// never contain the query row itself.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "forge/feature_store.hpp"

namespace forge {

struct Neighbor {
  std::uint64_t id = 0;
  float similarity = 0.0f;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Strict "ranks before" order used everywhere results are sorted.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

struct NeighborList {
  std::optional<std::uint64_t> query_id;
  std::vector<Neighbor> neighbors;

  friend bool operator==(const NeighborList&, const NeighborList&) = default;
};

enum class IndexMode : std::uint32_t { kExact = 0, kPartitioned = 1 };

std::string_view to_string(IndexMode mode);
IndexMode parse_index_mode(std::string_view s);

struct IndexConfig {
  IndexMode mode = IndexMode::kExact;
  /// 0 selects ceil(sqrt(count)).
  std::uint32_t num_partitions = 0;
  /// 0 selects ceil(sqrt(num_partitions)).
  std::uint32_t probes = 0;
  /// Candidates fetched per object before downstream filtering.
  std::uint32_t search_k = 16;
  std::uint32_t kmeans_iterations = 10;
  std::uint64_t seed = 0;
  /// Worker threads for build; 0 uses default_threads().
  std::size_t threads = 0;
};

class Index {
 public:
  virtual ~Index() = default;

  virtual IndexMode mode() const noexcept = 0;
  const FeatureMatrix& features() const noexcept { return *features_; }
  std::uint32_t dim() const noexcept { return features_->dim(); }
  std::uint64_t count() const noexcept { return features_->count(); }

  /// Top-k neighbors of an indexed row, excluding the row itself.
  NeighborList query(std::uint64_t row, std::size_t k) const;

  /// Top-k neighbors of an arbitrary vector; `exclude` drops one row.
  NeighborList query(std::span<const float> vec, std::size_t k,
                     std::optional<std::uint64_t> exclude = std::nullopt) const;

 protected:
  explicit Index(std::shared_ptr<const FeatureMatrix> features);

  virtual void search(std::span<const float> vec, std::size_t k,
                      std::optional<std::uint64_t> exclude,
                      std::vector<Neighbor>& out) const = 0;

  std::shared_ptr<const FeatureMatrix> features_;
};

class ExactIndex final : public Index {
 public:
  explicit ExactIndex(std::shared_ptr<const FeatureMatrix> features);
  IndexMode mode() const noexcept override { return IndexMode::kExact; }

 protected:
  void search(std::span<const float> vec, std::size_t k,
              std::optional<std::uint64_t> exclude,
              std::vector<Neighbor>& out) const override;
};

class PartitionedIndex final : public Index {
 public:
  /// Trains centroids and assigns rows. See IndexConfig for defaults.
  PartitionedIndex(std::shared_ptr<const FeatureMatrix> features,
                   const IndexConfig& config);

  /// Restores a persisted index over the same matrix.
  PartitionedIndex(std::shared_ptr<const FeatureMatrix> features,
                   FeatureMatrix centroids,
                   std::vector<std::vector<std::uint64_t>> lists,
                   std::uint32_t probes);

  IndexMode mode() const noexcept override { return IndexMode::kPartitioned; }
  std::uint32_t num_partitions() const noexcept {
    return static_cast<std::uint32_t>(lists_.size());
  }
  std::uint32_t probes() const noexcept { return probes_; }
  void set_probes(std::uint32_t probes);

  const FeatureMatrix& centroids() const noexcept { return centroids_; }
  const std::vector<std::vector<std::uint64_t>>& lists() const noexcept {
    return lists_;
  }

 protected:
  void search(std::span<const float> vec, std::size_t k,
              std::optional<std::uint64_t> exclude,
              std::vector<Neighbor>& out) const override;

 private:
  FeatureMatrix centroids_;
  std::vector<std::vector<std::uint64_t>> lists_;
  std::uint32_t probes_ = 1;
};

std::unique_ptr<Index> build_exact(std::shared_ptr<const FeatureMatrix> features);
std::unique_ptr<Index> build_partitioned(
    std::shared_ptr<const FeatureMatrix> features, const IndexConfig& config);
/// Dispatches on config.mode.
std::unique_ptr<Index> build_index(std::shared_ptr<const FeatureMatrix> features,
                                   const IndexConfig& config);

/// Convenience wrapper over Index::query with the NeighborList contract.
NeighborList query_topk(const Index& index, std::uint64_t row, std::size_t k);
NeighborList query_topk(const Index& index, std::span<const float> vec,
                        std::size_t k);

/// Queries every row (or `rows`) in parallel; result i answers row i.
std::vector<NeighborList> query_all(const Index& index, std::size_t k,
                                    std::size_t threads = 0);
std::vector<NeighborList> query_rows(const Index& index,
                                     std::span<const std::uint64_t> rows,
                                     std::size_t k, std::size_t threads = 0);

/// Mean over queries of |approx ∩ exact| / k.
double recall_eval(const Index& approx, const Index& exact,
                   std::span<const std::uint64_t> query_ids, std::size_t k,
                   std::size_t threads = 0);

/// OMIX persistence. The matrix itself is not stored; load_index needs the
/// matrix the index was built on.
void save_index(const std::filesystem::path& path, const Index& index);
std::unique_ptr<Index> load_index(const std::filesystem::path& path,
                                  std::shared_ptr<const FeatureMatrix> features);

}  // namespace forge
