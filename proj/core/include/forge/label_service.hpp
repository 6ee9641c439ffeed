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


// Threshold-calibration labeling sessions.
//
// A session samples graph edges whose similarity lies in a range and queues
// them for a human to mark as the same instance or not. Each session lives
// in its own directory:
//
//   <root>/<session_id>/session.json   spec, sampled pairs, chosen threshold
//   <root>/<session_id>/labels.jsonl   append-only label log
//
// The label log uses the same line format as offline label files, so it can
// be fed straight into precision_curve. State is rebuilt by replaying it.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/recurrence_analysis.hpp"
#include "forge/recurrence_graph.hpp"

namespace forge {

struct SampleSpec {
  std::uint64_t n = 1000;
  std::uint64_t seed = 0;
  double lo = 0.85;
  double hi = 1.0;

  void validate() const;
  friend bool operator==(const SampleSpec&, const SampleSpec&) = default;
};

struct SampledPair {
  std::uint64_t pair_id = 0;  // position in the queue
  ObjectId a = 0;
  ObjectId b = 0;
  float similarity = 0.0f;

  friend bool operator==(const SampledPair&, const SampledPair&) = default;
};

/// Unordered graph edges with similarity in [lo, hi], each pair once,
/// sorted by (a, b) with a < b.
std::vector<SampledPair> eligible_pairs(const KnnGraph& graph, double lo, double hi);

/// n pairs drawn uniformly without replacement, in draw order.
std::vector<SampledPair> sample_pairs(const KnnGraph& graph, const SampleSpec& spec);

struct SessionStats {
  std::uint64_t total = 0;
  std::uint64_t labeled = 0;
  std::uint64_t pending = 0;
  std::uint64_t matches = 0;
  std::optional<double> chosen_threshold;
};

class LabelSession {
 public:
  LabelSession(std::string id, SampleSpec spec, std::vector<SampledPair> pairs);

  const std::string& id() const noexcept { return id_; }
  const SampleSpec& spec() const noexcept { return spec_; }
  const std::vector<SampledPair>& pairs() const noexcept { return pairs_; }
  const std::vector<PairLabel>& labels() const noexcept { return labels_; }
  const std::vector<std::uint64_t>& labeled_pair_ids() const noexcept { return label_order_; }
  std::optional<double> chosen_threshold() const noexcept { return threshold_; }

  /// Lowest pending pair, or nullopt when every pair is labeled.
  std::optional<SampledPair> next_pair() const;
  const SampledPair& pair(std::uint64_t pair_id) const;  // NotFoundError
  bool is_labeled(std::uint64_t pair_id) const;

  /// NotFoundError for an unknown pair, ConflictError when already labeled.
  const PairLabel& submit_label(std::uint64_t pair_id, bool match);
  void set_threshold(double value);

  /// Precision over the completed labels. Zero labels is an error.
  PrecisionCurve live_precision(std::span<const double> thresholds) const;
  SessionStats stats() const;

 private:
  std::string id_;
  SampleSpec spec_;
  std::vector<SampledPair> pairs_;
  std::vector<std::uint8_t> labeled_;
  std::vector<PairLabel> labels_;
  std::vector<std::uint64_t> label_order_;
  std::uint64_t cursor_ = 0;
  std::optional<double> threshold_;
};

LabelSession create_session(const KnnGraph& graph, std::string id, const SampleSpec& spec);

std::string encode_session(const LabelSession& s);
/// Session without labels; labels come from the log.
LabelSession decode_session(std::string_view text);
/// {"pair_id", "a", "b", "sim", "match"}
std::string encode_label_line(std::uint64_t pair_id, const PairLabel& label);

/// Sessions under one root directory. Every mutation holds one lock and is
/// on disk before it returns.
class SessionStore {
 public:
  /// Replays every session found under `root`.
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  /// `id` empty picks the next free numeric id. ConflictError if taken.
  std::string create(const KnnGraph& graph, const SampleSpec& spec, std::string id = {});

  std::vector<std::string> list() const;
  bool contains(const std::string& id) const;

  /// Copy of the session state. NotFoundError for unknown ids.
  LabelSession snapshot(const std::string& id) const;
  std::optional<SampledPair> next_pair(const std::string& id) const;
  SampledPair pair(const std::string& id, std::uint64_t pair_id) const;
  SessionStats submit_label(const std::string& id, std::uint64_t pair_id, bool match);
  void set_threshold(const std::string& id, double value);
  PrecisionCurve live_precision(const std::string& id,
                                std::span<const double> thresholds) const;
  SessionStats stats(const std::string& id) const;

  std::filesystem::path labels_path(const std::string& id) const;

 private:
  LabelSession& get(const std::string& id);
  const LabelSession& get(const std::string& id) const;
  void load(const std::filesystem::path& dir);
  void save_session(const LabelSession& s) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<LabelSession>> sessions_;
};

}  // namespace forge
