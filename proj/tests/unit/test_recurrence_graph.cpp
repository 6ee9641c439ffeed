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


#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/recurrence_graph.hpp"
#include "forge/synth.hpp"
#include "oracles.hpp"

namespace forge {
namespace {

using testing::TempDir;

NeighborList list_of(std::initializer_list<float> sims) {
  NeighborList l;
  std::uint64_t id = 1;
  for (float s : sims) l.neighbors.push_back({id++, s});
  return l;
}

std::vector<float> sims_of(const NeighborList& l) {
  std::vector<float> out;
  for (const auto& n : l.neighbors) out.push_back(n.similarity);
  return out;
}

ObjectRecord record(ObjectId id, std::uint64_t row, std::string image) {
  ObjectRecord r;
  r.id = id;
  r.feature_row = row;
  r.image = std::move(image);
  r.bbox = {0, 0, 1, 1};
  r.class_label = "thing";
  r.det_conf = 1.0;
  return r;
}

TEST(FilterBand, KeepsInBandInOrder) {
  const auto out = filter_band(list_of({0.98f, 0.95f, 0.94f, 0.92f}), SimilarityBand{});
  EXPECT_EQ(sims_of(out), (std::vector<float>{0.95f, 0.94f}));
}

TEST(FilterBand, AllAboveHiIsEmpty) {
  EXPECT_TRUE(filter_band(list_of({0.99f, 0.98f}), SimilarityBand{}).neighbors.empty());
}

TEST(FilterBand, EndpointsInclusive) {
  const auto out = filter_band(list_of({0.975f, 0.93f}), SimilarityBand{});
  EXPECT_EQ(out.neighbors.size(), 2u);
}

TEST(SimilarityBand, Validate) {
  EXPECT_NO_THROW((SimilarityBand{0.93, 0.975}.validate()));
  EXPECT_THROW((SimilarityBand{0.98, 0.93}.validate()), ValidationError);
  EXPECT_THROW((SimilarityBand{-1.5, 0.5}.validate()), ValidationError);
  EXPECT_THROW((SimilarityBand{0.5, 1.5}.validate()), ValidationError);
}

TEST(BuildGraph, PlantedGroupOfFour) {
  PlantedGroupsSpec spec;
  spec.groups = 20;
  spec.in_band_fraction = 1.0;
  spec.in_band_lo = 0.94;
  spec.in_band_hi = 0.96;
  const auto c = planted_groups(spec);
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(c.features));
  const auto g = build_graph(*idx, c.records, GraphOptions{});
  ASSERT_EQ(g.nodes.size(), c.records.size());
  for (const auto& node : g.nodes) {
    ASSERT_EQ(node.neighbors.size(), 3u);
    const auto gid = c.group_of[node.id - 1];
    for (const auto& n : node.neighbors) EXPECT_EQ(c.group_of[n.id - 1], gid);
  }
  std::vector<std::pair<ObjectId, ObjectId>> edges;
  for (const auto& node : g.nodes) {
    for (const auto& n : node.neighbors) edges.emplace_back(node.id, n.id);
  }
  std::sort(edges.begin(), edges.end());
  EXPECT_EQ(edges, testing::oracle_planted_edges(c, SimilarityBand{}));
}

TEST(BuildGraph, OrthogonalCorpusIsEmpty) {
  std::vector<float> v(8 * 8, 0.0f);
  for (int i = 0; i < 8; ++i) v[i * 8 + i] = 1.0f;
  std::vector<ObjectRecord> recs;
  for (int i = 0; i < 8; ++i) recs.push_back(record(i, i, "img" + std::to_string(i)));
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(8, v));
  const auto g = build_graph(*idx, recs, GraphOptions{});
  EXPECT_TRUE(g.nodes.empty());
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(BuildGraph, SameImageExcluded) {
  // cos = 0.95 between rows 0 and 1.
  const float s = 0.95f;
  const float t = std::sqrt(1.0f - s * s);
  FeatureMatrix m(2, std::vector<float>{1.0f, 0.0f, s, t});
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(m));
  std::vector<ObjectRecord> same{record(1, 0, "a.jpg"), record(2, 1, "a.jpg")};
  EXPECT_TRUE(build_graph(*idx, same, GraphOptions{}).nodes.empty());
  std::vector<ObjectRecord> diff{record(1, 0, "a.jpg"), record(2, 1, "b.jpg")};
  const auto g = build_graph(*idx, diff, GraphOptions{});
  EXPECT_EQ(g.nodes.size(), 2u);
  EXPECT_EQ(g.degree(1), 1u);
  EXPECT_EQ(g.neighbors_of(1)[0].id, 2u);
}

TEST(BuildGraph, KMaxCapsDegree) {
  PlantedGroupsSpec spec;
  spec.groups = 10;
  spec.per_group = 8;
  spec.in_band_fraction = 1.0;
  const auto c = planted_groups(spec);
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(c.features));
  GraphOptions o;
  o.k_max = 5;
  const auto g = build_graph(*idx, c.records, o);
  for (const auto& node : g.nodes) {
    EXPECT_LE(node.neighbors.size(), 5u);
    for (std::size_t i = 1; i < node.neighbors.size(); ++i) {
      EXPECT_TRUE(ranks_before(node.neighbors[i - 1], node.neighbors[i]));
    }
  }
}

TEST(BuildGraph, DeterministicAcrossThreadCounts) {
  PlantedGroupsSpec spec;
  spec.groups = 50;
  const auto c = planted_groups(spec);
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(c.features));
  GraphOptions a, b;
  a.threads = 1;
  b.threads = 4;
  const auto ga = build_graph(*idx, c.records, a);
  const auto gb = build_graph(*idx, c.records, b);
  EXPECT_EQ(ga.nodes, gb.nodes);
}

TEST(GraphFile, RoundTripWithMeta) {
  TempDir dir;
  KnnGraph g;
  g.band = {0.9, 0.99};
  g.k_max = 4;
  g.nodes.push_back({3, {{5, 0.95f}, {9, 0.931f}}});
  g.nodes.push_back({5, {{3, 0.95f}}});
  write_graph(dir / "neighbors.jsonl", g);
  const auto back = read_graph(dir / "neighbors.jsonl");
  EXPECT_EQ(back.nodes, g.nodes);
  EXPECT_EQ(back.k_max, 4u);
  EXPECT_DOUBLE_EQ(back.band.lo, 0.9);
  const std::string text = read_file(dir / "neighbors.jsonl");
  EXPECT_EQ(text.substr(0, 8), "{\"id\":3,");
}

TEST(GraphFile, UnsortedIdsRejected) {
  TempDir dir;
  testing::write_text(dir / "n.jsonl",
                      "{\"id\":5,\"nn\":[{\"id\":3,\"sim\":0.95}]}\n"
                      "{\"id\":3,\"nn\":[{\"id\":5,\"sim\":0.95}]}\n");
  EXPECT_THROW(read_graph(dir / "n.jsonl"), FormatError);
}

TEST(Percent, PublishedRows) {
  EXPECT_EQ(format_percent(4550770, 55232441), "8.2%");
  EXPECT_EQ(format_percent(17119, 362684), "4.7%");
  EXPECT_EQ(format_percent(0, 0), "0.0%");
  EXPECT_DOUBLE_EQ(percent_1dp(1, 8), 12.5);
  EXPECT_DOUBLE_EQ(percent_1dp(1, 2000), 0.1);   // 0.05 rounds up
  EXPECT_DOUBLE_EQ(percent_1dp(1, 2001), 0.0);   // 0.04998 rounds down
}

TEST(Percent, MatchesDecimalOracle) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20000; ++i) {
    const std::uint64_t total = 1 + rng() % 100000000;
    const std::uint64_t count = rng() % (total + 1);
    ASSERT_EQ(format_percent(count, total), testing::oracle_percent(count, total))
        << count << "/" << total;
  }
}

TEST(DegreeStats, EmptyGraph) {
  const auto s = degree_stats(KnnGraph{}, std::vector<ObjectRecord>{});
  EXPECT_EQ(s.num_objects, 0u);
  EXPECT_EQ(s.count_ge1, 0u);
  EXPECT_EQ(s.count_ge3, 0u);
  EXPECT_EQ(s.pct_ge1, 0.0);
  EXPECT_EQ(s.pct_ge3, 0.0);
}

TEST(DegreeStats, CountsDegrees) {
  std::vector<ObjectRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(record(i, i, "i" + std::to_string(i % 4)));
  KnnGraph g;
  g.nodes.push_back({0, {{1, 0.95f}, {2, 0.95f}, {3, 0.95f}}});
  g.nodes.push_back({1, {{0, 0.95f}}});
  const auto s = degree_stats(g, recs);
  EXPECT_EQ(s.num_objects, 10u);
  EXPECT_EQ(s.num_images, 4u);
  EXPECT_EQ(s.count_ge1, 2u);
  EXPECT_EQ(s.count_ge3, 1u);
  EXPECT_DOUBLE_EQ(s.pct_ge1, 20.0);
  EXPECT_DOUBLE_EQ(s.pct_ge3, 10.0);
}

TEST(DegreeStats, FromCounts) {
  const auto s = stats_from_counts(0, 362684, 17119, 17119);
  EXPECT_DOUBLE_EQ(s.pct_ge3, 4.7);
  EXPECT_THROW(stats_from_counts(0, 10, 5, 6), ValidationError);
}

}  // namespace
}  // namespace forge
