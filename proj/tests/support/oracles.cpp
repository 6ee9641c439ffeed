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


#include "oracles.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <random>
#include <system_error>

namespace forge::testing {

namespace fs = std::filesystem;

double oracle_dot(const float* a, const float* b, std::size_t n) {
  double lanes[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t full = n - n % 4;
  for (std::size_t i = 0; i < full; ++i) {
    lanes[i % 4] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  for (std::size_t i = full; i < n; ++i) {
    lanes[0] += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

float oracle_cosine(const float* a, const float* b, std::size_t n) {
  return static_cast<float>(oracle_dot(a, b, n));
}

std::vector<Neighbor> oracle_topk(const FeatureMatrix& m, std::uint64_t row, std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(m.count());
  const float* q = m.row(row).data();
  for (std::uint64_t j = 0; j < m.count(); ++j) {
    if (j == row) continue;
    all.push_back({j, oracle_cosine(q, m.row(j).data(), m.dim())});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& x, const Neighbor& y) {
    return x.similarity > y.similarity || (x.similarity == y.similarity && x.id < y.id);
  });
  if (all.size() > k) all.resize(k);
  return all;
}

std::vector<std::pair<ObjectId, ObjectId>> oracle_planted_edges(const PlantedCorpus& c,
                                                                const SimilarityBand& band) {
  std::vector<std::pair<ObjectId, ObjectId>> edges;
  const auto& recs = c.records;
  const float lo = static_cast<float>(band.lo);
  const float hi = static_cast<float>(band.hi);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    for (std::size_t j = 0; j < recs.size(); ++j) {
      if (i == j || c.group_of[i] != c.group_of[j]) continue;
      if (recs[i].image == recs[j].image) continue;
      const float s = oracle_cosine(c.features.row(recs[i].feature_row).data(),
                                    c.features.row(recs[j].feature_row).data(),
                                    c.features.dim());
      if (s >= lo && s <= hi) edges.emplace_back(recs[i].id, recs[j].id);
    }
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

HandCount oracle_precision_count(const std::vector<PairLabel>& labels, double threshold) {
  HandCount h;
  for (const auto& l : labels) {
    if (l.similarity >= threshold) {
      ++h.support;
      if (l.match) ++h.matches;
    }
  }
  return h;
}

std::string oracle_percent(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return "0.0%";
  // Two decimal digits past the point, then round the tenths half-up.
  std::uint64_t remainder = count * 100 % total;
  std::uint64_t whole = count * 100 / total;
  std::uint64_t digits[2];
  for (auto& d : digits) {
    remainder *= 10;
    d = remainder / total;
    remainder %= total;
  }
  std::uint64_t tenths = whole * 10 + digits[0];
  if (digits[1] >= 5) ++tenths;
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "%";
}

TempDir::TempDir() {
  static std::atomic<std::uint64_t> counter{0};
  std::random_device rd;
  const fs::path base = fs::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    const fs::path p = base / ("forge-test-" + std::to_string(rd()) + "-" +
                               std::to_string(counter.fetch_add(1)));
    std::error_code ec;
    if (fs::create_directory(p, ec)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace forge::testing
