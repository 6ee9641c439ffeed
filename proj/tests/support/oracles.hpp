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


// Reference implementations used to check the library from the outside.
// They favor obviousness over speed and share no code with core/.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "forge/feature_store.hpp"
#include "forge/knn_index.hpp"
#include "forge/recurrence_analysis.hpp"
#include "forge/recurrence_graph.hpp"
#include "forge/synth.hpp"

namespace forge::testing {

/// Dot product following the published lane contract: products are
/// accumulated in double into lane (i mod 4) and the lanes are combined as
/// (lane0 + lane1) + (lane2 + lane3).
double oracle_dot(const float* a, const float* b, std::size_t n);

/// oracle_dot rounded to float.
float oracle_cosine(const float* a, const float* b, std::size_t n);

/// Scores every other row, sorts the whole list and keeps the first k.
std::vector<Neighbor> oracle_topk(const FeatureMatrix& m, std::uint64_t row, std::size_t k);

/// Every directed within-group edge of a planted corpus whose similarity
/// lies in the band, as (object id, neighbor id) pairs in ascending order.
std::vector<std::pair<ObjectId, ObjectId>> oracle_planted_edges(const PlantedCorpus& c,
                                                                const SimilarityBand& band);

/// Counts labels at or above the threshold by direct iteration.
struct HandCount {
  std::uint64_t support = 0;
  std::uint64_t matches = 0;
};
HandCount oracle_precision_count(const std::vector<PairLabel>& labels, double threshold);

/// Percentage string computed with long division on decimal digits.
std::string oracle_percent(std::uint64_t count, std::uint64_t total);

/// Removes the directory tree on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace forge::testing
