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


#include <memory>
#include <random>

#include <gtest/gtest.h>

#include "forge/error.hpp"
#include "forge/recurrence_analysis.hpp"
#include "forge/synth.hpp"
#include "oracles.hpp"

namespace forge {
namespace {

using testing::TempDir;

PairLabel label(double sim, bool match, ObjectId a = 1, ObjectId b = 2) {
  PairLabel l;
  l.id_a = a;
  l.id_b = b;
  l.similarity = sim;
  l.match = match;
  return l;
}

TEST(ThresholdSweep, GridIsExact) {
  const auto t = threshold_sweep(0.85, 1.0, 0.005);
  ASSERT_EQ(t.size(), 31u);
  EXPECT_EQ(t.front(), 0.85);
  EXPECT_EQ(t[16], 0.93);
  EXPECT_EQ(t.back(), 1.0);
  EXPECT_THROW(threshold_sweep(0.9, 0.8, 0.01), ValidationError);
  EXPECT_THROW(threshold_sweep(0.8, 0.9, 0.0), ValidationError);
}

TEST(PrecisionCurve, HandCountedExample) {
  const std::vector<PairLabel> labels{label(0.95, true), label(0.92, false),
                                      label(0.96, true), label(0.94, false)};
  const std::vector<double> t{0.93};
  const auto c = precision_curve(labels, t);
  ASSERT_EQ(c.points.size(), 1u);
  EXPECT_EQ(c.points[0].support, 3u);
  EXPECT_EQ(c.points[0].matches, 2u);
  EXPECT_DOUBLE_EQ(*c.points[0].precision, 2.0 / 3.0);
}

TEST(PrecisionCurve, AllTrueIsOneWhereSupported) {
  std::vector<PairLabel> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(label(0.9 + 0.005 * i, true));
  const auto c = precision_curve(labels, threshold_sweep());
  for (const auto& p : c.points) {
    if (p.support > 0) {
      EXPECT_EQ(*p.precision, 1.0);
    } else {
      EXPECT_FALSE(p.precision.has_value());
    }
  }
}

TEST(PrecisionCurve, SupportIsNonIncreasing) {
  std::mt19937_64 rng(4);
  std::vector<PairLabel> labels;
  for (int i = 0; i < 500; ++i) {
    labels.push_back(label(0.85 + 0.15 * (rng() % 1000) / 1000.0, rng() % 2 == 0));
  }
  const auto t = threshold_sweep();
  const auto c = precision_curve(labels, t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto h = testing::oracle_precision_count(labels, t[i]);
    EXPECT_EQ(c.points[i].support, h.support);
    EXPECT_EQ(c.points[i].matches, h.matches);
    if (i > 0) EXPECT_LE(c.points[i].support, c.points[i - 1].support);
  }
}

TEST(PrecisionCurve, Errors) {
  const std::vector<double> t{0.9, 0.9};
  EXPECT_THROW(precision_curve(std::vector<PairLabel>{}, t), ValidationError);
  const std::vector<PairLabel> one{label(0.9, true)};
  EXPECT_THROW(precision_curve(one, t), ValidationError);
}

TEST(ReadLabels, ParsesLog) {
  TempDir dir;
  testing::write_text(dir / "l.jsonl",
                      "{\"pair_id\":0,\"a\":1,\"b\":2,\"sim\":0.95,\"match\":true}\n"
                      "{\"a\":3,\"b\":4,\"sim\":0.9,\"match\":false}\n");
  const auto l = read_labels(dir / "l.jsonl");
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l[0].id_a, 1u);
  EXPECT_TRUE(l[0].match);
  EXPECT_DOUBLE_EQ(l[1].similarity, 0.9);
}

TEST(ReadLabels, NonBooleanMatchRejected) {
  TempDir dir;
  testing::write_text(dir / "l.jsonl", "{\"a\":1,\"b\":2,\"sim\":0.9,\"match\":1}\n");
  EXPECT_THROW(read_labels(dir / "l.jsonl"), FormatError);
}

TEST(Histogram, PointMass) {
  const std::vector<std::vector<float>> sims{{0.94f, 0.94f, 0.94f}};
  const auto h = similarity_histogram(sims, 200);
  std::uint64_t nonzero = 0;
  for (auto c : h.counts) {
    if (c) {
      ++nonzero;
      EXPECT_EQ(c, 3u);
    }
  }
  EXPECT_EQ(nonzero, 1u);
  EXPECT_EQ(h.values_in_band, 3u);
  EXPECT_EQ(h.objects_with_value_in_band, 1u);
  EXPECT_DOUBLE_EQ(h.fraction_in_band, 1.0);
}

TEST(Histogram, EmptyCorpus) {
  const auto h = similarity_histogram(std::vector<std::vector<float>>{}, 50);
  EXPECT_EQ(h.counts, std::vector<std::uint64_t>(50, 0));
  EXPECT_EQ(h.fraction_in_band, 0.0);
}

TEST(Histogram, EdgesLandInRange) {
  const std::vector<std::vector<float>> sims{{-1.0f, 1.0f, 0.0f}};
  const auto h = similarity_histogram(sims, 4);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{1, 0, 1, 1}));
}

TEST(Histogram, CountsSumToValues) {
  PlantedGroupsSpec spec;
  spec.groups = 40;
  const auto c = planted_groups(spec);
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(c.features));
  const auto sims = raw_topk_similarities(*idx, c.records, 3);
  ASSERT_EQ(sims.size(), c.records.size());
  const auto h = similarity_histogram(sims, 100);
  std::uint64_t total = 0;
  for (auto x : h.counts) total += x;
  EXPECT_EQ(total, h.num_values);
  EXPECT_EQ(h.num_values, 3 * c.records.size());
}

TEST(Scaling, FullFractionEqualsDegreeStats) {
  PartnerPairsSpec spec;
  spec.count = 2000;
  const auto c = partner_pairs(spec);
  const std::vector<double> fr{0.5, 1.0};
  const auto curve = scaling_curve(c.features, c.records, fr, 3, GraphOptions{}, IndexConfig{});
  auto idx = build_exact(std::make_shared<const FeatureMatrix>(c.features));
  const auto s = degree_stats(build_graph(*idx, c.records, GraphOptions{}), c.records);
  EXPECT_EQ(curve.points.back().count_ge1, s.count_ge1);
  EXPECT_EQ(curve.points.back().pct_ge1, s.pct_ge1);
  EXPECT_EQ(curve.points.front().subset_size, 1000u);
}

TEST(Scaling, SameSeedSameCurve) {
  PartnerPairsSpec spec;
  spec.count = 1000;
  const auto c = partner_pairs(spec);
  const std::vector<double> fr{0.25, 0.5};
  const auto a = scaling_curve(c.features, c.records, fr, 9, GraphOptions{}, IndexConfig{});
  const auto b = scaling_curve(c.features, c.records, fr, 9, GraphOptions{}, IndexConfig{});
  EXPECT_EQ(scaling_report_json(a), scaling_report_json(b));
}

TEST(Scaling, RejectsBadFractions) {
  PartnerPairsSpec spec;
  spec.count = 100;
  const auto c = partner_pairs(spec);
  const std::vector<double> bad{0.5, 0.25};
  EXPECT_THROW(scaling_curve(c.features, c.records, bad, 0, GraphOptions{}, IndexConfig{}),
               ValidationError);
  const std::vector<double> zero{0.0};
  EXPECT_THROW(scaling_curve(c.features, c.records, zero, 0, GraphOptions{}, IndexConfig{}),
               ValidationError);
}

TEST(ClassBreakdown, FourOfTen) {
  std::vector<ObjectRecord> recs(12);
  for (int i = 0; i < 12; ++i) {
    recs[i].id = i;
    recs[i].class_label = i < 10 ? "mug" : "lamp";
  }
  KnnGraph g;
  for (ObjectId id = 0; id < 4; ++id) {
    g.nodes.push_back({id, {{20, 0.95f}, {21, 0.95f}, {22, 0.95f}}});
  }
  g.nodes.push_back({4, {{20, 0.95f}, {21, 0.95f}}});
  const auto rows = class_breakdown(g, recs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].class_label, "lamp");
  EXPECT_EQ(rows[0].percentage, 0.0);
  EXPECT_EQ(rows[1].class_label, "mug");
  EXPECT_EQ(rows[1].num_with_ge3, 4u);
  EXPECT_DOUBLE_EQ(rows[1].percentage, 40.0);
}

TEST(Reports, StatsJsonFields) {
  const auto s = stats_from_counts(1, 55232441, 4550770, 4550770);
  const std::string j = stats_report_json(s);
  EXPECT_NE(j.find("\"pct_ge3_text\": \"8.2%\""), std::string::npos) << j;
  EXPECT_NE(stats_report_csv(s).find("8.2"), std::string::npos);
}

}  // namespace
}  // namespace forge
