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

#include "forge/recurrence_graph.hpp"

#include <algorithm>
#include <unordered_set>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/parallel.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

void SimilarityBand::validate() const {
  if (!(lo >= -1.0 && lo < hi && hi <= 1.0)) {
    throw ValidationError("similarity band must satisfy -1 <= lo < hi <= 1 (got [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "])");
  }
}

NeighborList filter_band(const NeighborList& list, const SimilarityBand& band) {
  NeighborList out;
  out.query_id = list.query_id;
  for (const auto& n : list.neighbors) {
    if (band.contains(n.similarity)) out.neighbors.push_back(n);
  }
  return out;
}

std::span<const Neighbor> KnnGraph::neighbors_of(ObjectId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id,
                             [](const GraphNode& n, ObjectId v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) return {};
  return it->neighbors;
}

std::uint64_t KnnGraph::edge_count() const {
  std::uint64_t n = 0;
  for (const auto& node : nodes) n += node.neighbors.size();
  return n;
}

std::vector<std::size_t> rows_to_records(std::span<const ObjectRecord> records,
                                         std::uint64_t row_count) {
  if (records.size() != row_count) {
    throw ValidationError("index holds " + std::to_string(row_count) +
                          " rows but " + std::to_string(records.size()) +
                          " records were supplied");
  }
  constexpr std::size_t kUnset = SIZE_MAX;
  std::vector<std::size_t> owner(row_count, kUnset);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto row = records[i].feature_row;
    if (row >= row_count) {
      throw ValidationError("object " + std::to_string(records[i].id) +
                            ": feature_row out of range");
    }
    if (owner[row] != kUnset) {
      throw ValidationError("feature row " + std::to_string(row) +
                            " is shared by several objects");
    }
    owner[row] = i;
  }
  return owner;
}

KnnGraph build_graph(const Index& index, std::span<const ObjectRecord> records,
                     const GraphOptions& options) {
  options.band.validate();
  if (options.k_max < 1) throw ValidationError("k_max must be at least 1");
  const auto owner = rows_to_records(records, index.count());

  // Query in record (id) order so the output needs no reordering.
  std::vector<std::uint64_t> rows(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) rows[i] = records[i].feature_row;

  const std::size_t fetch = std::max(options.search_k, options.k_max);
  std::vector<std::vector<Neighbor>> kept(records.size());
  parallel_for(records.size(), options.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if ((i & 1023) == 0) check_abort();
      const ObjectRecord& self = records[i];
      NeighborList cand = index.query(rows[i], fetch);
      auto& out = kept[i];
      for (const auto& n : cand.neighbors) {
        const ObjectRecord& other = records[owner[n.id]];
        if (other.image == self.image) continue;
        if (!options.band.contains(n.similarity)) continue;
        out.push_back({other.id, n.similarity});
      }
      std::sort(out.begin(), out.end(), ranks_before);
      if (out.size() > options.k_max) out.resize(options.k_max);
    }
  });

  KnnGraph g;
  g.band = options.band;
  g.k_max = options.k_max;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!kept[i].empty()) g.nodes.push_back({records[i].id, std::move(kept[i])});
  }
  return g;
}

namespace {

fs::path meta_path(const fs::path& graph_path) {
  fs::path p = graph_path;
  p.replace_extension(".meta.json");
  return p;
}

}  // namespace

void write_graph(const fs::path& path, const KnnGraph& graph) {
  AtomicFileWriter w(path, true);
  for (const auto& node : graph.nodes) {
    ordered_json line;
    line["id"] = node.id;
    ordered_json nn = ordered_json::array();
    for (const auto& n : node.neighbors) {
      ordered_json e;
      e["id"] = n.id;
      e["sim"] = detail::float_for_json(n.similarity);
      nn.push_back(std::move(e));
    }
    line["nn"] = std::move(nn);
    w.stream() << line.dump() << '\n';
  }
  w.commit();

  ordered_json meta;
  meta["lo"] = graph.band.lo;
  meta["hi"] = graph.band.hi;
  meta["k_max"] = graph.k_max;
  meta["nodes"] = graph.nodes.size();
  meta["edges"] = graph.edge_count();
  write_file_atomic(meta_path(path), meta.dump(2) + "\n");
}

KnnGraph read_graph(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file: " + path.string());

  KnnGraph g;
  if (fs::exists(meta_path(path))) {
    json meta;
    try {
      meta = json::parse(read_file(meta_path(path)));
    } catch (const json::parse_error& e) {
      throw FormatError("malformed graph metadata: " + std::string(e.what()));
    }
    g.band.lo = detail::get_number(meta, "lo", 0);
    g.band.hi = detail::get_number(meta, "hi", 0);
    g.k_max = static_cast<std::uint32_t>(detail::get_u64(meta, "k_max", 0));
    g.band.validate();
  }

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = detail::parse_json_line(line, line_no);
    GraphNode node;
    node.id = detail::get_u64(j, "id", line_no);
    const json& nn = detail::get_field(j, "nn", line_no);
    if (!nn.is_array()) throw FormatError("\"nn\" must be an array", line_no);
    for (const auto& e : nn) {
      Neighbor n;
      n.id = detail::get_u64(e, "id", line_no);
      n.similarity = static_cast<float>(detail::get_number(e, "sim", line_no));
      node.neighbors.push_back(n);
    }
    if (!g.nodes.empty() && node.id <= g.nodes.back().id) {
      throw FormatError("graph ids must be strictly increasing", line_no);
    }
    g.nodes.push_back(std::move(node));
  }
  return g;
}

namespace {

__extension__ typedef unsigned __int128 u128;

// Integer half-up rounding of 1000 * count / total (tenths of a percent).
std::uint64_t tenths_of_percent(std::uint64_t count, std::uint64_t total) {
  if (total == 0) return 0;
  const u128 num = static_cast<u128>(count) * 2000 + total;
  return static_cast<std::uint64_t>(num / (2 * static_cast<u128>(total)));
}

}  // namespace

double percent_1dp(std::uint64_t count, std::uint64_t total) {
  return static_cast<double>(tenths_of_percent(count, total)) / 10.0;
}

std::string format_percent(std::uint64_t count, std::uint64_t total) {
  const std::uint64_t tenths = tenths_of_percent(count, total);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "%";
}

RecurrenceStats stats_from_counts(std::uint64_t num_images,
                                  std::uint64_t num_objects,
                                  std::uint64_t count_ge1,
                                  std::uint64_t count_ge3) {
  if (count_ge3 > count_ge1 || count_ge1 > num_objects) {
    throw ValidationError("recurrence counts must satisfy ge3 <= ge1 <= objects");
  }
  RecurrenceStats s;
  s.num_images = num_images;
  s.num_objects = num_objects;
  s.count_ge1 = count_ge1;
  s.count_ge3 = count_ge3;
  s.pct_ge1 = percent_1dp(count_ge1, num_objects);
  s.pct_ge3 = percent_1dp(count_ge3, num_objects);
  return s;
}

RecurrenceStats degree_stats(const KnnGraph& graph,
                             std::span<const ObjectRecord> records) {
  std::unordered_set<std::string> images;
  std::uint64_t ge1 = 0, ge3 = 0;
  for (const auto& r : records) {
    images.insert(r.image);
    const auto d = graph.degree(r.id);
    if (d >= 1) ++ge1;
    if (d >= 3) ++ge3;
  }
  return stats_from_counts(images.size(), records.size(), ge1, ge3);
}

}  // namespace forge
