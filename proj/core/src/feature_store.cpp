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

#include "forge/feature_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "OMFV I/O assumes a little-endian host");

bool bbox_inside(const BBox& box, const ImageSize& size) {
  return box.x >= 0 && box.y >= 0 && box.w > 0 && box.h > 0 &&
         box.x + box.w <= size.width && box.y + box.h <= size.height;
}

// ---------------------------------------------------------------------------
// objects.jsonl

namespace {

ObjectRecord decode_object(std::string_view line, std::size_t line_no,
                           std::uint64_t line_index) {
  json j = detail::parse_json_line(line, line_no);
  ObjectRecord rec;
  rec.id = detail::get_u64(j, "id", line_no);
  rec.image = detail::get_string(j, "image", line_no);
  rec.bbox = detail::bbox_from_json(detail::get_field(j, "bbox", line_no), line_no);
  rec.class_label = detail::get_string(j, "class", line_no);
  rec.det_conf = detail::get_number(j, "det_conf", line_no);
  rec.feature_row = j.contains("feature_row")
                        ? detail::get_u64(j, "feature_row", line_no)
                        : line_index;
  if (auto it = j.find("image_size"); it != j.end()) {
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() ||
        !(*it)[1].is_number_integer()) {
      throw FormatError("image_size must be [width, height]", line_no);
    }
    rec.image_size = ImageSize{(*it)[0].get<std::int64_t>(),
                               (*it)[1].get<std::int64_t>()};
  }

  if (!(rec.det_conf >= 0.0 && rec.det_conf <= 1.0)) {
    throw ValidationError("line " + std::to_string(line_no) +
                          ": det_conf outside [0, 1]");
  }
  if (rec.bbox.w <= 0 || rec.bbox.h <= 0) {
    throw ValidationError("line " + std::to_string(line_no) +
                          ": bbox must have positive width and height");
  }
  if (rec.image_size && !bbox_inside(rec.bbox, *rec.image_size)) {
    throw ValidationError("line " + std::to_string(line_no) +
                          ": bbox outside image bounds");
  }
  return rec;
}

}  // namespace

ObjectReader::ObjectReader(const fs::path& path) {
  auto in = std::make_unique<std::ifstream>(path);
  if (!*in) throw IoError("cannot open objects file: " + path.string());
  in_ = std::move(in);
}

ObjectReader::ObjectReader(std::unique_ptr<std::istream> in)
    : in_(std::move(in)) {}

std::optional<ObjectRecord> ObjectReader::next() {
  while (std::getline(*in_, buf_)) {
    ++line_;
    if (!buf_.empty() && buf_.back() == '\r') buf_.pop_back();
    if (buf_.empty()) continue;
    ObjectRecord rec = decode_object(buf_, line_, records_);
    if (last_id_) {
      if (rec.id == *last_id_) {
        throw ValidationError("line " + std::to_string(line_) +
                              ": duplicate id " + std::to_string(rec.id));
      }
      if (rec.id < *last_id_) {
        throw ValidationError("line " + std::to_string(line_) +
                              ": ids must be strictly increasing");
      }
    }
    last_id_ = rec.id;
    ++records_;
    return rec;
  }
  if (in_->bad()) throw IoError("read failed in objects file");
  return std::nullopt;
}

std::vector<ObjectRecord> load_objects(const fs::path& path) {
  ObjectReader reader(path);
  std::vector<ObjectRecord> out;
  while (auto rec = reader.next()) out.push_back(std::move(*rec));
  return out;
}

std::string encode_object(const ObjectRecord& rec, std::uint64_t line_index) {
  ordered_json j;
  j["id"] = rec.id;
  j["image"] = rec.image;
  j["bbox"] = detail::bbox_to_json(rec.bbox);
  j["class"] = rec.class_label;
  j["det_conf"] = rec.det_conf;
  if (rec.feature_row != line_index) j["feature_row"] = rec.feature_row;
  if (rec.image_size) {
    j["image_size"] = json::array({rec.image_size->width, rec.image_size->height});
  }
  return j.dump();
}

void write_objects(const fs::path& path, std::span<const ObjectRecord> records) {
  AtomicFileWriter w(path, true);
  for (std::size_t i = 0; i < records.size(); ++i) {
    w.stream() << encode_object(records[i], i) << '\n';
  }
  w.commit();
}

std::vector<ObjectRecord> filter_by_confidence(
    std::span<const ObjectRecord> records, double cutoff) {
  std::vector<ObjectRecord> out;
  for (const auto& r : records) {
    if (r.det_conf >= cutoff) out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// FeatureMatrix

FeatureMatrix::FeatureMatrix(std::uint32_t dim, std::uint64_t count)
    : dim_(dim), count_(count), data_(static_cast<std::size_t>(dim) * count) {}

FeatureMatrix::FeatureMatrix(std::uint32_t dim, std::vector<float> data)
    : dim_(dim), data_(std::move(data)) {
  if (dim == 0) throw ValidationError("feature dimension must be positive");
  if (data_.size() % dim != 0) {
    throw ValidationError("feature payload is not a multiple of dim");
  }
  count_ = data_.size() / dim;
}

FeatureMatrix FeatureMatrix::gather(std::span<const std::uint64_t> rows) const {
  FeatureMatrix out(dim_, rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= count_) throw ValidationError("gather row out of range");
    auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// OMFV

namespace {

constexpr char kMagic[4] = {'O', 'M', 'F', 'V'};

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

OmfvReader::OmfvReader(const fs::path& path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open features file: " + path.string());

  char hdr[OmfvHeader::kSize];
  in_.read(hdr, sizeof(hdr));
  if (in_.gcount() < 4 || std::memcmp(hdr, kMagic, 4) != 0) {
    throw FormatError("magic mismatch in " + path.string() +
                      " (expected \"OMFV\")");
  }
  if (in_.gcount() != static_cast<std::streamsize>(sizeof(hdr))) {
    throw TruncatedError("truncated OMFV header in " + path.string());
  }
  header_.version = read_le<std::uint32_t>(hdr + 4);
  header_.dim = read_le<std::uint32_t>(hdr + 8);
  header_.count = read_le<std::uint64_t>(hdr + 12);
  if (header_.version != 1) {
    throw FormatError("unsupported OMFV version " +
                      std::to_string(header_.version));
  }
  if (header_.dim == 0) throw FormatError("OMFV dim must be positive");

  std::error_code ec;
  auto size = fs::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path.string());
  const std::uint64_t payload = size - OmfvHeader::kSize;
  const long double need = static_cast<long double>(header_.count) *
                           header_.dim * sizeof(float);
  if (need > static_cast<long double>(payload)) {
    throw TruncatedError("truncated OMFV payload in " + path.string() +
                         ": header declares " + std::to_string(header_.count) +
                         " x " + std::to_string(header_.dim) + " floats, file holds " +
                         std::to_string(payload) + " payload bytes");
  }
  if (need < static_cast<long double>(payload)) {
    throw FormatError("trailing bytes after OMFV payload in " + path.string());
  }
}

std::uint64_t OmfvReader::read_block(std::uint64_t max_rows,
                                     std::vector<float>& out) {
  const std::uint64_t rows = std::min(max_rows, remaining());
  out.resize(static_cast<std::size_t>(rows) * header_.dim);
  const auto bytes = static_cast<std::streamsize>(out.size() * sizeof(float));
  in_.read(reinterpret_cast<char*>(out.data()), bytes);
  if (in_.gcount() != bytes) throw TruncatedError("truncated OMFV payload");
  next_row_ += rows;
  return rows;
}

FeatureMatrix load_features(const fs::path& path) {
  OmfvReader reader(path);
  std::vector<float> data;
  reader.read_block(reader.header().count, data);
  FeatureMatrix m(reader.header().dim, reader.header().count);
  std::copy(data.begin(), data.end(), m.row(0).data());
  return m;
}

void write_features(const fs::path& path, const FeatureMatrix& m) {
  AtomicFileWriter w(path, true);
  char hdr[OmfvHeader::kSize];
  std::memcpy(hdr, kMagic, 4);
  const std::uint32_t version = 1;
  const std::uint32_t dim = m.dim();
  const std::uint64_t count = m.count();
  std::memcpy(hdr + 4, &version, 4);
  std::memcpy(hdr + 8, &dim, 4);
  std::memcpy(hdr + 12, &count, 8);
  w.stream().write(hdr, sizeof(hdr));
  auto data = m.data();
  w.stream().write(reinterpret_cast<const char*>(data.data()),
                   static_cast<std::streamsize>(data.size_bytes()));
  w.commit();
}

// ---------------------------------------------------------------------------
// Similarity

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ValidationError("dimension mismatch: " + std::to_string(a.size()) +
                          " vs " + std::to_string(b.size()));
  }
  return dot_unchecked(a.data(), b.data(), a.size());
}

float cosine(std::span<const float> a, std::span<const float> b) {
  return static_cast<float>(dot(a, b));
}

FeatureMatrix normalize(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::uint64_t r = 0; r < out.count(); ++r) {
    auto row = out.row(r);
    double sq = 0;
    for (float v : row) sq += static_cast<double>(v) * v;
    if (!(sq > 0.0) || !std::isfinite(sq)) {
      throw ValidationError("row " + std::to_string(r) +
                            " has zero or non-finite norm");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (float& v : row) v = static_cast<float>(v * inv);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest / corpus

CorpusManifest read_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  CorpusManifest m;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  m.objects_path = resolve(detail::get_string(j, "objects_path", 0));
  m.features_path = resolve(detail::get_string(j, "features_path", 0));
  m.dim = static_cast<std::uint32_t>(detail::get_u64(j, "dim", 0));
  m.count = detail::get_u64(j, "count", 0);
  if (j.contains("min_det_conf")) m.min_det_conf = detail::get_number(j, "min_det_conf", 0);
  if (!(m.min_det_conf >= 0.0 && m.min_det_conf <= 1.0)) {
    throw ValidationError("min_det_conf outside [0, 1]");
  }
  return m;
}

void write_manifest(const fs::path& path, const CorpusManifest& m) {
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) {
    if (base.empty()) return p.generic_string();
    auto r = p.lexically_relative(base);
    return (r.empty() ? p : r).generic_string();
  };
  ordered_json j;
  j["objects_path"] = rel(m.objects_path);
  j["features_path"] = rel(m.features_path);
  j["dim"] = m.dim;
  j["count"] = m.count;
  j["min_det_conf"] = m.min_det_conf;
  write_file_atomic(path, j.dump(2) + "\n");
}

Corpus make_corpus(CorpusManifest manifest, std::vector<ObjectRecord> records,
                   FeatureMatrix features) {
  if (records.size() != manifest.count) {
    throw ValidationError("manifest declares " + std::to_string(manifest.count) +
                          " objects, objects file holds " +
                          std::to_string(records.size()));
  }
  if (features.count() != manifest.count || features.dim() != manifest.dim) {
    throw ValidationError(
        "manifest declares " + std::to_string(manifest.count) + " x " +
        std::to_string(manifest.dim) + " features, features file holds " +
        std::to_string(features.count()) + " x " + std::to_string(features.dim()));
  }
  for (const auto& r : records) {
    if (r.feature_row >= features.count()) {
      throw ValidationError("object " + std::to_string(r.id) +
                            ": feature_row out of range");
    }
  }

  Corpus c;
  c.manifest = std::move(manifest);
  std::vector<ObjectRecord> kept = filter_by_confidence(records, c.manifest.min_det_conf);
  c.dropped_low_confidence = records.size() - kept.size();

  std::vector<std::uint64_t> rows;
  rows.reserve(kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    rows.push_back(kept[i].feature_row);
    kept[i].feature_row = i;
  }
  c.features = normalize(features.gather(rows));
  c.records = std::move(kept);
  return c;
}

Corpus load_corpus(const fs::path& manifest_path) {
  CorpusManifest m = read_manifest(manifest_path);
  auto records = load_objects(m.objects_path);
  auto features = load_features(m.features_path);
  return make_corpus(std::move(m), std::move(records), std::move(features));
}

}  // namespace forge
