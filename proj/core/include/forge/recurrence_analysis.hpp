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

// Corpus-level recurrence analyses: retrieval precision against a similarity
// threshold, the distribution of nearest-neighbor similarities, recurrence
// as a function of corpus size, and a per-class breakdown.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "forge/feature_store.hpp"
#include "forge/knn_index.hpp"
#include "forge/recurrence_graph.hpp"

namespace forge {

enum class LabelSource { kHuman, kSynthetic };

struct PairLabel {
  ObjectId id_a = 0;
  ObjectId id_b = 0;
  double similarity = 0.0;
  bool match = false;
  LabelSource source = LabelSource::kHuman;

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

/// Reads label records ({"a", "b", "sim", "match"} plus optional "pair_id"
/// and "source") from a JSONL file such as a labeling session log.
std::vector<PairLabel> read_labels(const std::filesystem::path& path);

struct PrecisionPoint {
  double threshold = 0.0;
  /// nullopt when no label reaches the threshold.
  std::optional<double> precision;
  std::uint64_t support = 0;
  std::uint64_t matches = 0;

  friend bool operator==(const PrecisionPoint&, const PrecisionPoint&) = default;
};

struct PrecisionCurve {
  std::vector<PrecisionPoint> points;

  friend bool operator==(const PrecisionCurve&, const PrecisionCurve&) = default;
};

/// Thresholds lo, lo+step, ..., <= hi. Each value is snapped to a 1e-9 grid
/// so 0.85 + 16 * 0.005 is exactly 0.93.
std::vector<double> threshold_sweep(double lo = 0.85, double hi = 1.0,
                                    double step = 0.005);

/// precision(t) = #matches with sim >= t / #labels with sim >= t.
/// Thresholds must be strictly increasing.
PrecisionCurve precision_curve(std::span<const PairLabel> labels,
                               std::span<const double> thresholds);

struct SimilarityHistogram {
  std::uint32_t bins = 0;
  /// counts[i] covers [-1 + i*w, -1 + (i+1)*w), the last bin includes 1.
  std::vector<std::uint64_t> counts;
  SimilarityBand band;
  std::uint64_t num_objects = 0;
  std::uint64_t num_values = 0;
  std::uint64_t values_in_band = 0;
  std::uint64_t objects_with_value_in_band = 0;
  double fraction_in_band = 0.0;
  double object_fraction_in_band = 0.0;
};

/// Top-k similarities per record before band filtering (self and
/// same-image candidates excluded), in record order.
std::vector<std::vector<float>> raw_topk_similarities(
    const Index& index, std::span<const ObjectRecord> records, std::size_t k = 3,
    std::uint32_t search_k = 16, std::size_t threads = 0);

SimilarityHistogram similarity_histogram(
    std::span<const std::vector<float>> per_object, std::uint32_t bins,
    const SimilarityBand& band = {});

struct ScalingPoint {
  double fraction = 0.0;
  std::uint64_t subset_size = 0;
  std::uint64_t count_ge1 = 0;
  std::uint64_t count_ge3 = 0;
  /// Rounded percentages, as in RecurrenceStats.
  double pct_ge1 = 0.0;
  double pct_ge3 = 0.0;
};

struct ScalingCurve {
  std::uint64_t seed = 0;
  std::vector<ScalingPoint> points;
};

/// For each fraction, a uniform subset of floor(fraction * N) records
/// (without replacement) gets its own index and graph.
ScalingCurve scaling_curve(const FeatureMatrix& features,
                           std::span<const ObjectRecord> records,
                           std::span<const double> fractions, std::uint64_t seed,
                           const GraphOptions& graph_options,
                           const IndexConfig& index_config);

struct ClassRow {
  std::string class_label;
  std::uint64_t num_objects = 0;
  std::uint64_t num_with_ge3 = 0;
  double percentage = 0.0;
};

/// Rows sorted by class label.
std::vector<ClassRow> class_breakdown(const KnnGraph& graph,
                                      std::span<const ObjectRecord> records);

// Report encoders used by the CLI.
std::string precision_report_json(const PrecisionCurve& curve);
std::string precision_report_csv(const PrecisionCurve& curve);
std::string histogram_report_json(const SimilarityHistogram& h);
std::string histogram_report_csv(const SimilarityHistogram& h);
std::string scaling_report_json(const ScalingCurve& c);
std::string scaling_report_csv(const ScalingCurve& c);
std::string breakdown_report_json(const std::vector<ClassRow>& rows);
std::string breakdown_report_csv(const std::vector<ClassRow>& rows);
std::string stats_report_json(const RecurrenceStats& s);
std::string stats_report_csv(const RecurrenceStats& s);

}  // namespace forge
