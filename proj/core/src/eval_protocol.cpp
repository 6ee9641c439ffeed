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


#include "forge/eval_protocol.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/parallel.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

IdentityScore identity_score(std::span<const float> emb_gen, std::span<const float> emb_ref,
                             std::string generated_crop_ref,
                             std::string reference_crop_ref) {
  return {cosine(emb_gen, emb_ref), std::move(generated_crop_ref),
          std::move(reference_crop_ref)};
}

double triplet_agreement(const AgreementTriplet& t) {
  if (t.user_choice != 1 && t.user_choice != 2) {
    throw ValidationError("user_choice must be 1 or 2");
  }
  const float s1 = cosine(t.ref, t.gen1);
  const float s2 = cosine(t.ref, t.gen2);
  if (s1 == s2) return 0.5;
  return (s1 > s2) == (t.user_choice == 1) ? 1.0 : 0.0;
}

double metric_agreement(std::span<const AgreementTriplet> triplets) {
  if (triplets.empty()) throw ValidationError("metric_agreement needs at least one triplet");
  double sum = 0.0;
  for (const auto& t : triplets) sum += triplet_agreement(t);
  return sum / static_cast<double>(triplets.size());
}

// ---------------------------------------------------------------------------
// Quadruplets

std::vector<BenchmarkSample> expand_quadruplets(std::span<const BenchmarkQuadruplet> quads) {
  std::vector<BenchmarkSample> out;
  out.reserve(quads.size() * kCapturesPerQuadruplet);
  for (const auto& q : quads) {
    if (q.object_id.empty()) throw ValidationError("quadruplet without object_id");
    if (q.captures.size() != kCapturesPerQuadruplet) {
      throw ValidationError("incomplete quadruplet " + q.object_id + ": " +
                            std::to_string(q.captures.size()) + " captures, expected 4");
    }
    for (const auto& c : q.captures) {
      if (c.image.empty() || c.background.empty()) {
        throw ValidationError("incomplete quadruplet " + q.object_id +
                              ": capture without image or background");
      }
    }
    for (std::size_t gt = 0; gt < kCapturesPerQuadruplet; ++gt) {
      BenchmarkSample s;
      s.sample_id = q.object_id + "_" + std::to_string(gt);
      s.object_id = q.object_id;
      s.ground_truth = q.captures[gt];
      s.scene = q.captures[gt].background;
      std::size_t r = 0;
      for (std::size_t i = 0; i < kCapturesPerQuadruplet; ++i) {
        if (i != gt) s.references[r++] = q.captures[i];
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<BenchmarkQuadruplet> read_benchmark(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open benchmark file: " + path.string());
  std::vector<BenchmarkQuadruplet> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = detail::parse_json_line(line, n);
    BenchmarkQuadruplet q;
    q.object_id = detail::get_string(j, "object_id", n);
    const json& caps = detail::get_field(j, "captures", n);
    if (!caps.is_array()) throw FormatError("captures must be an array", n);
    for (const auto& c : caps) {
      q.captures.push_back(
          {detail::get_string(c, "image", n), detail::get_string(c, "background", n)});
    }
    out.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding tables

EmbeddingTable::EmbeddingTable(std::vector<std::string> keys, FeatureMatrix features)
    : keys_(std::move(keys)), features_(std::move(features)) {
  if (keys_.size() != features_.count()) {
    throw ValidationError("embedding table has " + std::to_string(keys_.size()) +
                          " keys for " + std::to_string(features_.count()) + " rows");
  }
  index_.reserve(keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (!index_.emplace(keys_[i], i).second) {
      throw ValidationError("duplicate embedding key: " + keys_[i]);
    }
  }
}

std::span<const float> EmbeddingTable::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return {};
  return features_.row(it->second);
}

std::span<const float> EmbeddingTable::at(std::string_view key) const {
  auto row = find(key);
  if (row.empty()) throw NotFoundError("no embedding for key: " + std::string(key));
  return row;
}

namespace {

fs::path ids_path(const fs::path& path) { return fs::path(path.string() + ".ids"); }

}  // namespace

EmbeddingTable load_embedding_table(const fs::path& path) {
  FeatureMatrix features = normalize(load_features(path));
  std::ifstream in(ids_path(path));
  if (!in) throw IoError("cannot open id map: " + ids_path(path).string());
  std::vector<std::string> keys;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) keys.push_back(line);
  }
  if (keys.size() != features.count()) {
    throw FormatError("id map " + ids_path(path).string() + " has " +
                      std::to_string(keys.size()) + " keys for " +
                      std::to_string(features.count()) + " rows");
  }
  return EmbeddingTable(std::move(keys), std::move(features));
}

void write_embedding_table(const fs::path& path, std::span<const std::string> keys,
                           const FeatureMatrix& features) {
  if (keys.size() != features.count()) {
    throw ValidationError("key count does not match embedding rows");
  }
  write_features(path, features);
  std::string ids;
  for (const auto& k : keys) ids += k + "\n";
  write_file_atomic(ids_path(path), ids);
}

std::vector<AgreementTriplet> read_triplets(const fs::path& path, const EmbeddingTable& table) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open triplet file: " + path.string());
  std::vector<AgreementTriplet> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = detail::parse_json_line(line, n);
    auto vec = [&](const char* key) {
      auto row = table.at(detail::get_string(j, key, n));
      return std::vector<float>(row.begin(), row.end());
    };
    AgreementTriplet t{vec("ref"), vec("gen1"), vec("gen2"),
                       static_cast<int>(detail::get_u64(j, "choice", n))};
    if (t.user_choice != 1 && t.user_choice != 2) {
      throw FormatError("choice must be 1 or 2", n);
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark report

BenchmarkReport benchmark_report(std::span<const BenchmarkSample> samples,
                                 const fs::path& outputs_dir,
                                 std::span<const CompositionMetric> composition,
                                 const IdentityMetric* identity, std::size_t threads) {
  for (const auto& s : samples) {
    const fs::path out = outputs_dir / (s.sample_id + ".png");
    if (!fs::exists(out)) {
      throw IoError("missing output for sample " + s.sample_id + ": " + out.string());
    }
  }

  BenchmarkReport report;
  for (const auto& m : composition) report.composition_names.push_back(m.name);
  report.samples.resize(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const BenchmarkSample& s = samples[i];
      SampleScores& row = report.samples[i];
      row.sample_id = s.sample_id;
      row.object_id = s.object_id;
      for (const auto& m : composition) {
        auto gen = m.generated.find(s.sample_id);
        if (gen.empty()) {
          throw ValidationError("metric " + m.name + " has no embedding for output of sample " +
                                s.sample_id);
        }
        row.composition.push_back(cosine(gen, m.ground_truth.at(s.ground_truth.image)));
      }
      if (identity) {
        auto gen = identity->generated.find(s.sample_id);
        if (!gen.empty()) {
          double sum = 0.0;
          for (const auto& ref : s.references) {
            sum += identity_score(gen, identity->references.at(ref.image)).value.value();
          }
          row.identity = static_cast<float>(sum / static_cast<double>(s.references.size()));
        }
      }
    }
  });

  for (std::size_t m = 0; m < composition.size(); ++m) {
    MetricSummary summary{composition[m].name, 0.0, report.samples.size()};
    for (const auto& row : report.samples) summary.mean += row.composition[m];
    if (summary.count) summary.mean /= static_cast<double>(summary.count);
    report.composition.push_back(std::move(summary));
  }
  std::stable_sort(report.composition.begin(), report.composition.end(),
                   [](const MetricSummary& a, const MetricSummary& b) { return a.mean > b.mean; });

  if (identity) {
    MetricSummary summary{"identity", 0.0, 0};
    for (const auto& row : report.samples) {
      if (row.identity) {
        summary.mean += *row.identity;
        ++summary.count;
      } else {
        ++report.identity_failures;
      }
    }
    if (summary.count) summary.mean /= static_cast<double>(summary.count);
    report.identity = summary;
  }
  return report;
}

std::string encode_benchmark_json(const BenchmarkReport& report) {
  ordered_json j;
  j["kind"] = "benchmark_report";
  ordered_json rows = ordered_json::array();
  for (const auto& s : report.samples) {
    ordered_json r;
    r["sample_id"] = s.sample_id;
    r["object_id"] = s.object_id;
    ordered_json comp = ordered_json::object();
    for (std::size_t m = 0; m < s.composition.size(); ++m) {
      comp[report.composition_names[m]] = detail::float_for_json(s.composition[m]);
    }
    r["composition"] = std::move(comp);
    r["identity"] = s.identity ? ordered_json(detail::float_for_json(*s.identity))
                               : ordered_json(nullptr);
    rows.push_back(std::move(r));
  }
  j["samples"] = std::move(rows);
  ordered_json ranking = ordered_json::array();
  for (const auto& m : report.composition) {
    ranking.push_back({{"name", m.name}, {"mean", m.mean}, {"count", m.count}});
  }
  j["composition"] = std::move(ranking);
  if (report.identity) {
    ordered_json id;
    id["mean"] = report.identity->count ? ordered_json(report.identity->mean)
                                        : ordered_json(nullptr);
    id["count"] = report.identity->count;
    id["failures"] = report.identity_failures;
    j["identity"] = std::move(id);
  } else {
    j["identity"] = nullptr;
  }
  return j.dump(2) + "\n";
}

std::string encode_benchmark_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "sample_id,object_id";
  for (const auto& name : report.composition_names) out << ',' << name;
  if (report.identity) out << ",identity";
  out << '\n';
  for (const auto& s : report.samples) {
    out << s.sample_id << ',' << s.object_id;
    for (float v : s.composition) out << ',' << json(detail::float_for_json(v)).dump();
    if (report.identity) {
      out << ',';
      if (s.identity) out << json(detail::float_for_json(*s.identity)).dump();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace forge
