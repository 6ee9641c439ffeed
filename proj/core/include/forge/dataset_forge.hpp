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

// Supervised object-composition examples built from the recurrence graph.
//
// Every object with at least three retained neighbors becomes one example:
// the object's own image is the target, its three most similar neighbors are
// the reference views, and the scene is either a background with the
// object removed (insertion) or a caption (subject generation).
//
// Training inputs are laid out as a 2x2 grid of 512x512 tiles:
//
//   +--------+--------+
//   | target |  ref1  |
//   +--------+--------+
//   |  ref2  |  ref3  |
//   +--------+--------+
//
// and the loss mask covers only the target quadrant.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "forge/feature_store.hpp"
#include "forge/image.hpp"
#include "forge/recurrence_graph.hpp"

namespace forge {

enum class Task { kInsertion, kSubjectGen };

std::string_view to_string(Task task);
/// Accepts "insertion", "subject" and "subject_gen".
Task parse_task(std::string_view s);

struct SceneDescription {
  Task kind = Task::kInsertion;
  std::optional<std::string> background_ref;  // insertion
  std::optional<BBox> position_mask_bbox;     // insertion
  std::optional<std::string> caption;         // subject generation

  /// Insertion: background and bbox, no caption. Subject: caption only.
  bool complete() const;
};

inline constexpr std::size_t kNumReferences = 3;

struct TrainingExample {
  ObjectRecord target;
  std::array<ObjectRecord, kNumReferences> references;
  std::array<float, kNumReferences> similarities{};
  SceneDescription scene;
};

struct AssemblyStats {
  std::uint64_t emitted = 0;
  std::uint64_t skipped = 0;  // fewer than 3 neighbors
};

/// Streams one example per object with >= 3 neighbors, in ascending target
/// id. References are the top three neighbors by similarity.
AssemblyStats assemble_examples(
    const KnnGraph& graph, std::span<const ObjectRecord> records, Task task,
    const std::function<void(TrainingExample&&)>& sink);

std::vector<TrainingExample> assemble_examples(const KnnGraph& graph,
                                               std::span<const ObjectRecord> records,
                                               Task task,
                                               AssemblyStats* stats = nullptr);

/// Throws ValidationError naming the first broken invariant.
void validate_example(const TrainingExample& ex, const SimilarityBand& band);

/// Sets the removal-model background and the target bbox as position mask.
/// `background_ref` is recorded verbatim; `background_file` is checked.
TrainingExample attach_background(TrainingExample ex,
                                  const std::filesystem::path& background_file,
                                  const ImageSize& target_size,
                                  std::optional<std::string> background_ref = {});

TrainingExample attach_caption(TrainingExample ex, std::string caption);

// ---------------------------------------------------------------------------
// Grid conditioning

inline constexpr std::int64_t kTileSize = 512;
inline constexpr std::int64_t kCanvasSize = 1024;

struct GridLayout {
  enum Slot : int { kTarget = 0, kRef1 = 1, kRef2 = 2, kRef3 = 3 };
  /// Pixel rectangle of a slot on the canvas.
  static BBox slot(int index);
};

/// 1 on the target quadrant (rows and cols 0-511), 0 elsewhere.
struct LossMask {
  std::vector<std::uint8_t> values;  // kCanvasSize * kCanvasSize, row major

  std::uint8_t at(std::int64_t x, std::int64_t y) const {
    return values[static_cast<std::size_t>(y * kCanvasSize + x)];
  }
  std::uint64_t ones() const;
};

LossMask make_loss_mask();

struct Grid {
  Image canvas;
  LossMask mask;
};

/// Tiles must already be kTileSize squares with equal channel counts.
Grid compose_grid(const Image& target, std::span<const Image> refs);
Image extract_slot(const Image& canvas, int slot);

/// Float planes for channel stacking, HWC.
struct Plane {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int channels = 1;
  std::vector<float> values;

  float& at(std::int64_t x, std::int64_t y, int c) {
    return values[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  float at(std::int64_t x, std::int64_t y, int c) const {
    return values[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
};

Plane to_plane(const Image& img);  // values scaled to [0, 1]
/// kCanvasSize plane holding `tile` in the top-left quadrant, zeros elsewhere.
Plane quadrant_plane(const Plane& tile);
/// Single-channel kCanvasSize plane, 1 inside `box` (tile coordinates,
/// clipped to the target quadrant).
Plane bbox_mask_plane(const BBox& box);

struct ChannelStack {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int channels = 0;
  std::vector<std::string> order;                   // "noisy", "background", "mask"
  std::vector<std::pair<int, int>> channel_ranges;  // [begin, end) per entry
  std::vector<float> values;                        // HWC
};

/// Concatenates (noisy, background, mask) along the channel axis. The
/// background and mask planes must be zero outside the target quadrant and
/// the mask must have one channel.
ChannelStack insertion_channels(const Plane& noisy, const Plane& background,
                                const Plane& mask);

// ---------------------------------------------------------------------------
// Training manifest

struct TrainingManifest {
  Task task = Task::kInsertion;
  std::uint64_t steps = 100000;
  std::uint32_t batch_size = 128;
  double ref_dropout = 0.10;
  std::optional<double> text_dropout;  // subject generation only
  double gamma_image = 2.0;
  std::optional<double> gamma_text;  // subject generation only
  SimilarityBand band;
  std::uint32_t k_max = 5;
  std::uint64_t seed = 0;
  std::int64_t tile_size = kTileSize;
  std::int64_t canvas_size = kCanvasSize;

  friend bool operator==(const TrainingManifest&, const TrainingManifest&);
};

/// Task defaults: insertion uses image guidance 2; subject generation uses
/// image guidance 1.5, text guidance 7.5 and a 10% empty-prompt bucket.
TrainingManifest default_manifest(Task task, const SimilarityBand& band = {},
                                  std::uint32_t k_max = 5, std::uint64_t seed = 0);
std::string encode_manifest(const TrainingManifest& m);
TrainingManifest parse_manifest(std::string_view text);
void emit_manifest(const std::filesystem::path& path, const TrainingManifest& m);

// ---------------------------------------------------------------------------
// examples.jsonl

struct ExampleRow {
  ObjectId target = 0;
  std::array<ObjectId, kNumReferences> refs{};
  std::array<float, kNumReferences> sims{};
  SceneDescription scene;
  std::optional<std::string> grid;
  std::optional<BBox> mask_bbox;
};

std::string encode_example(const ExampleRow& row);
ExampleRow decode_example(std::string_view line, std::size_t line_no = 0);
std::vector<ExampleRow> read_examples(const std::filesystem::path& path);

struct DatasetOptions {
  Task task = Task::kInsertion;
  std::filesystem::path out_dir;
  /// Root holding backgrounds/<id>.png and captions/<id>.txt.
  std::optional<std::filesystem::path> sidecar_dir;
  /// Root against which record image paths are resolved.
  std::filesystem::path image_root;
  bool render_grids = false;
  /// Missing or invalid sidecars become errors instead of counted gaps.
  bool strict_sidecars = false;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
};

struct DatasetResult {
  AssemblyStats assembly;
  std::uint64_t missing_scene = 0;
  std::uint64_t grids_written = 0;
};

/// Writes examples.jsonl, training_manifest.json and optionally grids/.
DatasetResult emit_dataset(const KnnGraph& graph, std::span<const ObjectRecord> records,
                           const DatasetOptions& options);

}  // namespace forge
