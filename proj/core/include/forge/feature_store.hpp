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

// Object records and instance-retrieval feature vectors.
//
// objects.jsonl holds one detected object per line:
//   {"id": 0, "image": "img/0001.jpg", "bbox": [x, y, w, h], "class": "mug",
//    "det_conf": 0.93}
// with optional "feature_row" (defaults to the line index) and
// "image_size": [w, h].
//
// features.bin (OMFV) is a little-endian binary matrix:
//   "OMFV" | u32 version=1 | u32 dim | u64 count | count*dim f32, row major.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace forge {

using ObjectId = std::uint64_t;

struct BBox {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;

  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ImageSize {
  std::int64_t width = 0;
  std::int64_t height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

bool bbox_inside(const BBox& box, const ImageSize& size);

struct ObjectRecord {
  ObjectId id = 0;
  std::string image;
  BBox bbox;
  std::string class_label;
  double det_conf = 0.0;
  std::uint64_t feature_row = 0;
  std::optional<ImageSize> image_size;

  friend bool operator==(const ObjectRecord&, const ObjectRecord&) = default;
};

/// Streaming reader for objects.jsonl. Holds one line in memory at a time,
/// so corpora with tens of millions of objects can be scanned.
class ObjectReader {
 public:
  explicit ObjectReader(const std::filesystem::path& path);
  explicit ObjectReader(std::unique_ptr<std::istream> in);

  /// Next record in file order, or nullopt at end of file.
  /// Throws FormatError (with line number) or ValidationError.
  std::optional<ObjectRecord> next();

  std::size_t line() const noexcept { return line_; }
  std::size_t records_read() const noexcept { return records_; }

 private:
  std::unique_ptr<std::istream> in_;
  std::string buf_;
  std::size_t line_ = 0;
  std::size_t records_ = 0;
  std::optional<ObjectId> last_id_;
};

std::vector<ObjectRecord> load_objects(const std::filesystem::path& path);

/// Canonical single-line encoding; `line_index` decides whether
/// "feature_row" must be written.
std::string encode_object(const ObjectRecord& rec, std::uint64_t line_index);
void write_objects(const std::filesystem::path& path,
                   std::span<const ObjectRecord> records);

/// Records with det_conf >= cutoff, order preserved.
std::vector<ObjectRecord> filter_by_confidence(
    std::span<const ObjectRecord> records, double cutoff);

class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::uint32_t dim, std::uint64_t count);
  FeatureMatrix(std::uint32_t dim, std::vector<float> data);

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint64_t count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  std::span<const float> row(std::uint64_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<float> row(std::uint64_t i) {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<const float> data() const noexcept { return data_; }

  /// Rows `rows` copied in the given order.
  FeatureMatrix gather(std::span<const std::uint64_t> rows) const;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::uint32_t dim_ = 0;
  std::uint64_t count_ = 0;
  std::vector<float> data_;
};

struct OmfvHeader {
  std::uint32_t version = 1;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;

  static constexpr std::size_t kSize = 20;
};

/// Reads an OMFV file in row blocks without loading the payload.
class OmfvReader {
 public:
  explicit OmfvReader(const std::filesystem::path& path);

  const OmfvHeader& header() const noexcept { return header_; }
  std::uint64_t remaining() const noexcept { return header_.count - next_row_; }

  /// Reads up to `max_rows` rows into `out` (resized); returns rows read.
  std::uint64_t read_block(std::uint64_t max_rows, std::vector<float>& out);

 private:
  std::ifstream in_;
  OmfvHeader header_;
  std::uint64_t next_row_ = 0;
};

FeatureMatrix load_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureMatrix& m);

/// Dot product of float vectors accumulated in double. Four lanes
/// (i mod 4) summed as (l0 + l1) + (l2 + l3); the order is part of the
/// contract so every caller gets bit-identical scores.
inline double dot_unchecked(const float* a, const float* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < n; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

/// Checked dot_unchecked. Throws ValidationError on dimension mismatch.
double dot(std::span<const float> a, std::span<const float> b);

/// Cosine of two unit vectors: the dot product rounded to float.
float cosine(std::span<const float> a, std::span<const float> b);

/// Scales every row to unit Euclidean norm. Zero rows are an error.
FeatureMatrix normalize(const FeatureMatrix& m);

struct CorpusManifest {
  std::filesystem::path objects_path;
  std::filesystem::path features_path;
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  double min_det_conf = 0.8;
};

/// Relative paths in the file are resolved against the manifest directory.
CorpusManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const CorpusManifest& m);

/// Records and normalized features after the confidence cutoff. Kept records
/// keep their ids; their feature_row is remapped to the compacted matrix.
struct Corpus {
  CorpusManifest manifest;
  std::vector<ObjectRecord> records;
  FeatureMatrix features;
  std::uint64_t dropped_low_confidence = 0;
};

Corpus load_corpus(const std::filesystem::path& manifest_path);

/// Validates counts/rows and applies the cutoff to already-loaded data.
Corpus make_corpus(CorpusManifest manifest, std::vector<ObjectRecord> records,
                   FeatureMatrix features);

}  // namespace forge
