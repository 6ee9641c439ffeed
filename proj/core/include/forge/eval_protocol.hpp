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


// Evaluation protocol: the instance-retrieval identity score, agreement of a
// metric with user preferences, and the quadruplet insertion benchmark.
//
// Every embedding is read from disk, so the harness works with any encoder.
// An embedding table is an OMFV matrix plus a sidecar "<file>.ids" with one
// key per line, row i belonging to line i.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "forge/feature_store.hpp"

namespace forge {

struct IdentityScore {
  std::optional<float> value;  // empty when the generated crop is missing
  std::string generated_crop_ref;
  std::string reference_crop_ref;
};

/// Cosine of two unit embeddings, bit-identical to cosine().
IdentityScore identity_score(std::span<const float> emb_gen, std::span<const float> emb_ref,
                             std::string generated_crop_ref = {},
                             std::string reference_crop_ref = {});

struct AgreementTriplet {
  std::vector<float> ref;
  std::vector<float> gen1;
  std::vector<float> gen2;
  int user_choice = 1;  // 1 or 2
};

/// Score of a single triplet: 1 when the metric prefers the user's choice,
/// 0 when it prefers the other, 0.5 on an exact tie.
double triplet_agreement(const AgreementTriplet& t);

/// Mean triplet agreement. Empty input is an error.
double metric_agreement(std::span<const AgreementTriplet> triplets);

struct Capture {
  std::string image;       // photo with the object
  std::string background;  // same view without it

  friend bool operator==(const Capture&, const Capture&) = default;
};

inline constexpr std::size_t kCapturesPerQuadruplet = 4;

struct BenchmarkQuadruplet {
  std::string object_id;
  std::vector<Capture> captures;  // exactly four when complete
};

struct BenchmarkSample {
  std::string sample_id;  // "<object_id>_<ground truth index>"
  std::string object_id;
  Capture ground_truth;
  std::string scene;  // background of the ground truth capture
  std::array<Capture, 3> references;
};

/// Four samples per quadruplet, one per choice of ground truth capture.
std::vector<BenchmarkSample> expand_quadruplets(std::span<const BenchmarkQuadruplet> quads);

/// Lines {"object_id": ..., "captures": [{"image": ..., "background": ...}, ...]}.
std::vector<BenchmarkQuadruplet> read_benchmark(const std::filesystem::path& path);

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::string> keys, FeatureMatrix features);

  std::size_t size() const noexcept { return keys_.size(); }
  std::uint32_t dim() const noexcept { return features_.dim(); }
  const std::vector<std::string>& keys() const noexcept { return keys_; }
  /// Empty span when the key is absent.
  std::span<const float> find(std::string_view key) const;
  std::span<const float> at(std::string_view key) const;  // NotFoundError

 private:
  std::vector<std::string> keys_;
  FeatureMatrix features_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Loads `path` and `path.ids`, normalizing rows.
EmbeddingTable load_embedding_table(const std::filesystem::path& path);
void write_embedding_table(const std::filesystem::path& path,
                           std::span<const std::string> keys, const FeatureMatrix& features);

/// Triplets from JSONL lines {"ref": key, "gen1": key, "gen2": key,
/// "choice": 1|2} resolved against an embedding table.
std::vector<AgreementTriplet> read_triplets(const std::filesystem::path& path,
                                            const EmbeddingTable& table);


/// A semantic metric: generated outputs keyed by sample id, ground truth
/// keyed by the ground truth capture image.
struct CompositionMetric {
  std::string name;
  EmbeddingTable generated;
  EmbeddingTable ground_truth;
};

/// Identity embeddings of crops: generated crops keyed by sample id, which
/// may be absent when detection failed, and reference crops keyed by the
/// reference capture image.
struct IdentityMetric {
  EmbeddingTable generated;
  EmbeddingTable references;
};

struct SampleScores {
  std::string sample_id;
  std::string object_id;
  std::vector<float> composition;  // one per composition metric
  std::optional<float> identity;   // mean over the three reference crops
};

struct MetricSummary {
  std::string name;
  double mean = 0.0;
  std::uint64_t count = 0;
};

struct BenchmarkReport {
  std::vector<std::string> composition_names;  // order of SampleScores::composition
  std::vector<SampleScores> samples;
  std::vector<MetricSummary> composition;  // ranked by mean, descending
  std::optional<MetricSummary> identity;
  std::uint64_t identity_failures = 0;
};

/// Every sample needs outputs/<sample_id>.png and a generated embedding in
/// every composition metric.
BenchmarkReport benchmark_report(std::span<const BenchmarkSample> samples,
                                 const std::filesystem::path& outputs_dir,
                                 std::span<const CompositionMetric> composition,
                                 const IdentityMetric* identity, std::size_t threads = 0);

std::string encode_benchmark_json(const BenchmarkReport& report);
std::string encode_benchmark_csv(const BenchmarkReport& report);

}  // namespace forge
