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

#include "forge/knn_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/parallel.hpp"

namespace forge {

namespace fs = std::filesystem;

std::string_view to_string(IndexMode mode) {
  return mode == IndexMode::kExact ? "exact" : "partitioned";
}

IndexMode parse_index_mode(std::string_view s) {
  if (s == "exact") return IndexMode::kExact;
  if (s == "partitioned") return IndexMode::kPartitioned;
  throw ValidationError("unknown index mode: " + std::string(s));
}

namespace {

// Bounded selection of the k best neighbors. The heap front is the current
// worst entry so most candidates are rejected with one compare.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  void push(std::uint64_t id, float sim) {
    Neighbor n{id, sim};
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
      return;
    }
    if (sim < heap_.front().similarity) return;
    if (!ranks_before(n, heap_.front())) return;
    std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
    heap_.back() = n;
    std::push_heap(heap_.begin(), heap_.end(), ranks_before);
  }

  void finish(std::vector<Neighbor>& out) {
    std::sort_heap(heap_.begin(), heap_.end(), ranks_before);
    out = std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

std::uint32_t ceil_sqrt(std::uint64_t n) {
  auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r < n) ++r;
  while (r > 0 && (r - 1) * (r - 1) >= n) --r;
  return static_cast<std::uint32_t>(r);
}

// Index of the centroid with the highest dot product; ties to the lower index.
std::uint32_t nearest_centroid(const FeatureMatrix& centroids, const float* v) {
  std::uint32_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::uint32_t c = 0; c < centroids.count(); ++c) {
    double s = dot_unchecked(centroids.row(c).data(), v, centroids.dim());
    if (s > best_score) {
      best_score = s;
      best = c;
    }
  }
  return best;
}

// Spherical k-means on a seeded sample of rows.
FeatureMatrix train_centroids(const FeatureMatrix& data, std::uint32_t parts,
                              std::uint32_t iterations, std::uint64_t seed,
                              std::size_t threads) {
  const std::uint64_t n = data.count();
  const std::uint64_t sample_size =
      std::min<std::uint64_t>(n, 100ull * parts);

  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::uint64_t i = 0; i < sample_size; ++i) {
    std::uniform_int_distribution<std::uint64_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(sample_size);

  FeatureMatrix centroids = data.gather(std::span(order).first(parts));
  std::sort(order.begin(), order.end());
  const FeatureMatrix sample = data.gather(order);

  const std::uint32_t dim = data.dim();
  std::vector<std::uint32_t> assign(sample.count());
  for (std::uint32_t it = 0; it < iterations; ++it) {
    parallel_for(sample.count(), threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        assign[i] = nearest_centroid(centroids, sample.row(i).data());
      }
    });

    std::vector<double> sums(static_cast<std::size_t>(parts) * dim, 0.0);
    std::vector<std::uint64_t> sizes(parts, 0);
    for (std::uint64_t i = 0; i < sample.count(); ++i) {
      auto row = sample.row(i);
      double* s = sums.data() + static_cast<std::size_t>(assign[i]) * dim;
      for (std::uint32_t d = 0; d < dim; ++d) s[d] += row[d];
      ++sizes[assign[i]];
    }
    for (std::uint32_t c = 0; c < parts; ++c) {
      if (sizes[c] == 0) continue;  // keep the previous centroid
      const double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      double norm = 0;
      for (std::uint32_t d = 0; d < dim; ++d) norm += s[d] * s[d];
      if (!(norm > 0)) continue;
      const double inv = 1.0 / std::sqrt(norm);
      auto out = centroids.row(c);
      for (std::uint32_t d = 0; d < dim; ++d) out[d] = static_cast<float>(s[d] * inv);
    }
  }
  return centroids;
}

}  // namespace

// ---------------------------------------------------------------------------
// Index

Index::Index(std::shared_ptr<const FeatureMatrix> features)
    : features_(std::move(features)) {
  if (!features_ || features_->empty()) {
    throw ValidationError("cannot build an index over an empty matrix");
  }
}

NeighborList Index::query(std::uint64_t row, std::size_t k) const {
  if (row >= count()) {
    throw NotFoundError("unknown query id " + std::to_string(row));
  }
  NeighborList out = query(features_->row(row), k, row);
  out.query_id = row;
  return out;
}

NeighborList Index::query(std::span<const float> vec, std::size_t k,
                          std::optional<std::uint64_t> exclude) const {
  if (k == 0) throw ValidationError("k must be at least 1");
  if (vec.size() != dim()) {
    throw ValidationError("query dimension " + std::to_string(vec.size()) +
                          " does not match index dimension " +
                          std::to_string(dim()));
  }
  NeighborList out;
  out.query_id = exclude;
  search(vec, k, exclude, out.neighbors);
  return out;
}

ExactIndex::ExactIndex(std::shared_ptr<const FeatureMatrix> features)
    : Index(std::move(features)) {}

void ExactIndex::search(std::span<const float> vec, std::size_t k,
                        std::optional<std::uint64_t> exclude,
                        std::vector<Neighbor>& out) const {
  const FeatureMatrix& m = *features_;
  const std::uint32_t dim = m.dim();
  const float* base = m.data().data();
  const std::uint64_t skip = exclude.value_or(UINT64_MAX);
  TopK top(k);
  for (std::uint64_t r = 0; r < m.count(); ++r) {
    if (r == skip) continue;
    top.push(r, static_cast<float>(dot_unchecked(vec.data(), base + r * dim, dim)));
  }
  top.finish(out);
}

PartitionedIndex::PartitionedIndex(std::shared_ptr<const FeatureMatrix> features,
                                   const IndexConfig& config)
    : Index(std::move(features)) {
  const std::uint64_t n = count();
  const std::uint32_t parts =
      config.num_partitions ? config.num_partitions : ceil_sqrt(n);
  if (parts < 1) throw ValidationError("num_partitions must be at least 1");
  if (parts > n) {
    throw ValidationError("num_partitions (" + std::to_string(parts) +
                          ") exceeds row count (" + std::to_string(n) + ")");
  }
  const std::uint32_t probes = config.probes ? config.probes : ceil_sqrt(parts);
  if (probes > parts) {
    throw ValidationError("probes (" + std::to_string(probes) +
                          ") exceeds num_partitions (" + std::to_string(parts) + ")");
  }
  probes_ = probes;

  centroids_ = train_centroids(*features_, parts, config.kmeans_iterations,
                               config.seed, config.threads);

  std::vector<std::uint32_t> assign(n);
  parallel_for(n, config.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      assign[i] = nearest_centroid(centroids_, features_->row(i).data());
    }
  });
  lists_.assign(parts, {});
  for (std::uint64_t i = 0; i < n; ++i) lists_[assign[i]].push_back(i);
}

PartitionedIndex::PartitionedIndex(std::shared_ptr<const FeatureMatrix> features,
                                   FeatureMatrix centroids,
                                   std::vector<std::vector<std::uint64_t>> lists,
                                   std::uint32_t probes)
    : Index(std::move(features)),
      centroids_(std::move(centroids)),
      lists_(std::move(lists)) {
  if (lists_.empty() || centroids_.count() != lists_.size() ||
      centroids_.dim() != dim()) {
    throw FormatError("inconsistent partitioned index layout");
  }
  std::uint64_t total = 0;
  for (const auto& l : lists_) {
    for (auto id : l) {
      if (id >= count()) throw FormatError("partition id out of range");
    }
    total += l.size();
  }
  if (total != count()) throw FormatError("partition lists do not cover all rows");
  set_probes(probes);
}

void PartitionedIndex::set_probes(std::uint32_t probes) {
  if (probes < 1) throw ValidationError("probes must be at least 1");
  if (probes > num_partitions()) {
    throw ValidationError("probes (" + std::to_string(probes) +
                          ") exceeds num_partitions (" +
                          std::to_string(num_partitions()) + ")");
  }
  probes_ = probes;
}

void PartitionedIndex::search(std::span<const float> vec, std::size_t k,
                              std::optional<std::uint64_t> exclude,
                              std::vector<Neighbor>& out) const {
  const std::uint32_t dim = this->dim();
  const std::uint32_t parts = num_partitions();

  std::vector<Neighbor> scored(parts);
  for (std::uint32_t c = 0; c < parts; ++c) {
    scored[c] = {c, static_cast<float>(
                        dot_unchecked(vec.data(), centroids_.row(c).data(), dim))};
  }
  std::partial_sort(scored.begin(), scored.begin() + probes_, scored.end(),
                    ranks_before);

  const float* base = features_->data().data();
  const std::uint64_t skip = exclude.value_or(UINT64_MAX);
  TopK top(k);
  for (std::uint32_t p = 0; p < probes_; ++p) {
    for (std::uint64_t r : lists_[scored[p].id]) {
      if (r == skip) continue;
      top.push(r, static_cast<float>(dot_unchecked(vec.data(), base + r * dim, dim)));
    }
  }
  top.finish(out);
}

// ---------------------------------------------------------------------------
// Free functions

std::unique_ptr<Index> build_exact(std::shared_ptr<const FeatureMatrix> features) {
  return std::make_unique<ExactIndex>(std::move(features));
}

std::unique_ptr<Index> build_partitioned(
    std::shared_ptr<const FeatureMatrix> features, const IndexConfig& config) {
  return std::make_unique<PartitionedIndex>(std::move(features), config);
}

std::unique_ptr<Index> build_index(std::shared_ptr<const FeatureMatrix> features,
                                   const IndexConfig& config) {
  if (config.search_k < 1) throw ValidationError("search_k must be at least 1");
  if (config.mode == IndexMode::kExact) return build_exact(std::move(features));
  return build_partitioned(std::move(features), config);
}

NeighborList query_topk(const Index& index, std::uint64_t row, std::size_t k) {
  return index.query(row, k);
}

NeighborList query_topk(const Index& index, std::span<const float> vec,
                        std::size_t k) {
  return index.query(vec, k);
}

std::vector<NeighborList> query_rows(const Index& index,
                                     std::span<const std::uint64_t> rows,
                                     std::size_t k, std::size_t threads) {
  std::vector<NeighborList> out(rows.size());
  parallel_for(rows.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if ((i & 1023) == 0) check_abort();
      out[i] = index.query(rows[i], k);
    }
  });
  return out;
}

std::vector<NeighborList> query_all(const Index& index, std::size_t k,
                                    std::size_t threads) {
  std::vector<std::uint64_t> rows(index.count());
  std::iota(rows.begin(), rows.end(), 0);
  return query_rows(index, rows, k, threads);
}

double recall_eval(const Index& approx, const Index& exact,
                   std::span<const std::uint64_t> query_ids, std::size_t k,
                   std::size_t threads) {
  if (query_ids.empty()) throw ValidationError("recall_eval needs at least one query");
  if (approx.count() != exact.count() || approx.dim() != exact.dim()) {
    throw ValidationError("recall_eval indexes cover different matrices");
  }
  auto a = query_rows(approx, query_ids, k, threads);
  auto e = query_rows(exact, query_ids, k, threads);
  double total = 0;
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    std::vector<std::uint64_t> ids_a, ids_e;
    for (const auto& n : a[q].neighbors) ids_a.push_back(n.id);
    for (const auto& n : e[q].neighbors) ids_e.push_back(n.id);
    std::sort(ids_a.begin(), ids_a.end());
    std::sort(ids_e.begin(), ids_e.end());
    std::vector<std::uint64_t> both;
    std::set_intersection(ids_a.begin(), ids_a.end(), ids_e.begin(), ids_e.end(),
                          std::back_inserter(both));
    total += static_cast<double>(both.size()) / static_cast<double>(k);
  }
  return total / static_cast<double>(query_ids.size());
}

// ---------------------------------------------------------------------------
// OMIX persistence
//
//   "OMIX" | u32 version=1 | u32 mode | u32 dim | u64 count |
//   u32 num_partitions | u32 probes |
//   num_partitions*dim f32 centroids |
//   per partition: u64 length, length*u64 row ids

namespace {

constexpr char kIndexMagic[4] = {'O', 'M', 'I', 'X'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (in.gcount() != sizeof(T)) throw TruncatedError("truncated OMIX file");
  return v;
}

}  // namespace

void save_index(const fs::path& path, const Index& index) {
  AtomicFileWriter w(path, true);
  auto& out = w.stream();
  out.write(kIndexMagic, 4);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(index.mode()));
  put<std::uint32_t>(out, index.dim());
  put<std::uint64_t>(out, index.count());
  if (const auto* p = dynamic_cast<const PartitionedIndex*>(&index)) {
    put<std::uint32_t>(out, p->num_partitions());
    put<std::uint32_t>(out, p->probes());
    auto c = p->centroids().data();
    out.write(reinterpret_cast<const char*>(c.data()),
              static_cast<std::streamsize>(c.size_bytes()));
    for (const auto& list : p->lists()) {
      put<std::uint64_t>(out, list.size());
      out.write(reinterpret_cast<const char*>(list.data()),
                static_cast<std::streamsize>(list.size() * sizeof(std::uint64_t)));
    }
  } else {
    put<std::uint32_t>(out, 0);
    put<std::uint32_t>(out, 0);
  }
  w.commit();
}

std::unique_ptr<Index> load_index(const fs::path& path,
                                  std::shared_ptr<const FeatureMatrix> features) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open index file: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kIndexMagic, 4) != 0) {
    throw FormatError("magic mismatch in " + path.string() + " (expected \"OMIX\")");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != 1) throw FormatError("unsupported OMIX version " + std::to_string(version));
  const auto mode = get<std::uint32_t>(in);
  const auto dim = get<std::uint32_t>(in);
  const auto count = get<std::uint64_t>(in);
  const auto parts = get<std::uint32_t>(in);
  const auto probes = get<std::uint32_t>(in);
  if (!features || features->dim() != dim || features->count() != count) {
    throw ValidationError("index " + path.string() +
                          " was built over a different feature matrix");
  }
  if (mode == static_cast<std::uint32_t>(IndexMode::kExact)) {
    return build_exact(std::move(features));
  }
  if (mode != static_cast<std::uint32_t>(IndexMode::kPartitioned)) {
    throw FormatError("unknown OMIX mode " + std::to_string(mode));
  }
  if (parts == 0 || parts > count) throw FormatError("bad OMIX partition count");

  std::vector<float> cdata(static_cast<std::size_t>(parts) * dim);
  in.read(reinterpret_cast<char*>(cdata.data()),
          static_cast<std::streamsize>(cdata.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != cdata.size() * sizeof(float)) {
    throw TruncatedError("truncated OMIX centroid block");
  }
  std::vector<std::vector<std::uint64_t>> lists(parts);
  for (auto& list : lists) {
    const auto len = get<std::uint64_t>(in);
    if (len > count) throw FormatError("bad OMIX list length");
    list.resize(len);
    in.read(reinterpret_cast<char*>(list.data()),
            static_cast<std::streamsize>(len * sizeof(std::uint64_t)));
    if (static_cast<std::uint64_t>(in.gcount()) != len * sizeof(std::uint64_t)) {
      throw TruncatedError("truncated OMIX partition list");
    }
  }
  return std::make_unique<PartitionedIndex>(
      std::move(features), FeatureMatrix(dim, std::move(cdata)), std::move(lists),
      probes);
}

}  // namespace forge
