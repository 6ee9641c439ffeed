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


// Acceptance suite. Prints one PASS or FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "forge/dataset_forge.hpp"
#include "forge/error.hpp"
#include "forge/eval_protocol.hpp"
#include "forge/guidance.hpp"
#include "forge/io.hpp"
#include "forge/knn_index.hpp"
#include "forge/label_service.hpp"
#include "forge/recurrence_analysis.hpp"
#include "forge/recurrence_graph.hpp"
#include "forge/synth.hpp"
#include "oracles.hpp"

namespace forge {
namespace {

namespace fs = std::filesystem;
using testing::oracle_topk;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      pass = false;
      detail << what;
    }
  }
};

using Check = std::function<void(Outcome&)>;

std::shared_ptr<const FeatureMatrix> shared(FeatureMatrix m) {
  return std::make_shared<const FeatureMatrix>(std::move(m));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void exact_knn_oracle(Outcome& o) {
  constexpr std::uint64_t kRows = 10000;
  constexpr double kMaxSeconds = 60.0;
  const auto m = random_unit_vectors(kRows, 64, 2024);
  auto index = build_exact(shared(m));

  std::vector<std::vector<Neighbor>> oracle(kRows);
  for (std::uint64_t q = 0; q < kRows; ++q) oracle[q] = oracle_topk(m, q, 16);

  double slowest = 0.0;
  std::uint64_t mismatches = 0;
  for (std::size_t k : {1u, 5u, 16u}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto got = query_all(*index, k);
    slowest = std::max(slowest, seconds_since(t0));
    for (std::uint64_t q = 0; q < kRows; ++q) {
      const std::vector<Neighbor> want(oracle[q].begin(), oracle[q].begin() + k);
      if (got[q].neighbors != want) ++mismatches;
    }
  }
  o.detail << "30000 queries, " << mismatches << " mismatches, slowest k pass "
           << slowest << " s";
  o.require(mismatches == 0, "results differ from brute-force oracle");
  o.require(slowest < kMaxSeconds, "query time over 60 s");
}

PlantedCorpus default_planted() { return planted_groups(PlantedGroupsSpec{}); }

void approximate_recall(Outcome& o) {
  constexpr double kMinRecall = 0.95;
  const auto c = default_planted();
  auto m = shared(c.features);

  // Construction checks: within-group >= 0.95, cross-group < 0.5. With
  // groups of four, each object's three group mates must rank first and the
  // fourth entry is its most similar object from another group.
  float min_within = 2.0f, max_cross = -2.0f;
  bool mates_first = true;
  for (std::uint64_t i = 0; i < m->count(); ++i) {
    const auto near = oracle_topk(*m, i, 4);
    for (std::size_t j = 0; j < 3; ++j) {
      mates_first = mates_first && c.group_of[near[j].id] == c.group_of[i];
      min_within = std::min(min_within, near[j].similarity);
    }
    max_cross = std::max(max_cross, near[3].similarity);
  }
  IndexConfig cfg;
  cfg.mode = IndexMode::kPartitioned;
  auto approx = build_partitioned(m, cfg);
  auto exact = build_exact(m);
  std::vector<std::uint64_t> queries(m->count());
  std::iota(queries.begin(), queries.end(), 0);
  const double recall = recall_eval(*approx, *exact, queries, 3);
  const auto* p = dynamic_cast<const PartitionedIndex*>(approx.get());
  o.detail << "recall@3 " << recall << " over " << queries.size() << " queries ("
           << p->num_partitions() << " partitions, " << p->probes()
           << " probes); min within-group sim " << min_within << ", max cross-group sim "
           << max_cross;
  o.require(mates_first, "an object ranks a foreign object above a group mate");
  o.require(min_within >= 0.95f, "planted corpus violates within-group >= 0.95");
  o.require(max_cross < 0.5f, "planted corpus violates cross-group < 0.5");
  o.require(recall >= kMinRecall, "recall below 0.95");
}

void planted_recovery(Outcome& o) {
  constexpr double kDesignedGe3 = 70.0;
  constexpr double kTolerance = 0.5;
  const auto c = default_planted();
  const SimilarityBand band{0.93, 0.975};
  GraphOptions go;
  go.band = band;
  go.k_max = 5;
  auto index = build_exact(shared(c.features));
  const auto g = build_graph(*index, c.records, go);

  std::vector<std::pair<ObjectId, ObjectId>> edges;
  for (const auto& node : g.nodes) {
    for (const auto& n : node.neighbors) edges.emplace_back(node.id, n.id);
  }
  std::sort(edges.begin(), edges.end());
  const auto want = testing::oracle_planted_edges(c, band);
  std::vector<std::pair<ObjectId, ObjectId>> spurious, missing;
  std::set_difference(edges.begin(), edges.end(), want.begin(), want.end(),
                      std::back_inserter(spurious));
  std::set_difference(want.begin(), want.end(), edges.begin(), edges.end(),
                      std::back_inserter(missing));
  const auto stats = degree_stats(g, c.records);
  o.detail << edges.size() << " edges, " << want.size() << " planted in band, "
           << spurious.size() << " spurious, " << missing.size() << " missing; ge3 "
           << stats.pct_ge3 << "% vs designed " << kDesignedGe3 << "%";
  o.require(spurious.empty(), "spurious edges");
  o.require(missing.empty(), "missing planted edges");
  o.require(std::abs(stats.pct_ge3 - kDesignedGe3) <= kTolerance, "ge3 percentage off design");
}

void statistics_table(Outcome& o) {
  struct Row {
    const char* name;
    std::uint64_t objects, count;
    const char* want;
  };
  const Row rows[] = {{"web", 55232441, 4550770, "8.2%"},
                      {"coco", 362684, 17119, "4.7%"},
                      {"openimages", 8067907, 64991, "2.4%"}};
  for (const auto& r : rows) {
    const auto s = stats_from_counts(0, r.objects, r.count, r.count);
    const std::string got = format_percent(s.count_ge3, s.num_objects);
    o.detail << r.name << " " << r.count << "/" << r.objects << " -> " << got << " (want "
             << r.want << ")  ";
    o.require(got == r.want, std::string(r.name) + " row formats as " + got);
  }
}

void scaling_sanity(Outcome& o) {
  constexpr double kRelTolerance = 0.10;
  PartnerPairsSpec spec;
  spec.count = 50000;
  const auto c = partner_pairs(spec);
  IndexConfig ic;
  ic.mode = IndexMode::kPartitioned;
  ic.seed = 5;
  GraphOptions go;
  const std::vector<double> fractions{0.25, 0.5, 1.0};
  const auto curve = scaling_curve(c.features, c.records, fractions, 17, go, ic);

  auto full_index = build_index(shared(c.features), ic);
  const auto full = degree_stats(build_graph(*full_index, c.records, go), c.records);
  const double full_frac = static_cast<double>(full.count_ge1) / static_cast<double>(full.num_objects);
  for (const auto& p : curve.points) {
    const double measured = static_cast<double>(p.count_ge1) / static_cast<double>(p.subset_size);
    // A paired object keeps its partner with probability (m - 1) / (N - 1).
    const double keep = static_cast<double>(p.subset_size - 1) /
                        static_cast<double>(spec.count - 1);
    const double predicted = full_frac * keep;
    const double rel = std::abs(measured - predicted) / predicted;
    o.detail << "q=" << p.fraction << " measured " << measured << " predicted " << predicted
             << " (rel " << rel << ")  ";
    o.require(rel <= kRelTolerance, "fraction " + std::to_string(p.fraction) + " off prediction");
  }
  const auto& last = curve.points.back();
  o.detail << "full degree_stats ge1 " << full.count_ge1;
  o.require(last.count_ge1 == full.count_ge1 && last.count_ge3 == full.count_ge3 &&
                last.pct_ge1 == full.pct_ge1 && last.pct_ge3 == full.pct_ge3,
            "fraction 1.0 differs from degree_stats");
}

void precision_oracle(Outcome& o) {
  // Twenty pairs, similarities 0.8525 + 0.007 i, labeled by hand.
  const int match[20] = {1, 0, 0, 1, 0, 1, 0, 0, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 1, 1};
  const std::uint64_t want_support[31] = {20, 19, 18, 18, 17, 16, 16, 15, 14, 13, 13,
                                          12, 11, 11, 10, 9,  8,  8,  7,  6,  6,  5,
                                          4,  3,  3,  2,  1,  1,  0,  0,  0};
  const std::uint64_t want_matches[31] = {13, 12, 12, 12, 12, 11, 11, 11, 10, 10, 10,
                                          10, 9,  9,  8,  8,  7,  7,  6,  5,  5,  5,
                                          4,  3,  3,  2,  1,  1,  0,  0,  0};
  KnnGraph g;
  std::vector<PairLabel> labels;
  for (int i = 0; i < 20; ++i) {
    const float sim = static_cast<float>(0.8525 + 0.007 * i);
    const ObjectId a = 2 * i + 1, b = 2 * i + 2;
    g.nodes.push_back({a, {{b, sim}}});
    labels.push_back({a, b, static_cast<double>(sim), match[i] == 1, LabelSource::kHuman});
  }
  const auto thresholds = threshold_sweep(0.85, 1.0, 0.005);
  const auto offline = precision_curve(labels, thresholds);
  std::uint64_t bad = 0;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const auto& p = offline.points[i];
    const bool ok = p.support == want_support[i] && p.matches == want_matches[i] &&
                    (p.support == 0
                         ? !p.precision.has_value()
                         : p.precision == static_cast<double>(want_matches[i]) /
                                              static_cast<double>(want_support[i]));
    bad += !ok;
  }
  o.detail << thresholds.size() << " thresholds, " << bad << " differ from hand counts";
  o.require(thresholds.size() == 31, "sweep does not have 31 thresholds");
  o.require(bad == 0, "offline curve differs from hand counts");

  testing::TempDir dir;
  std::string id;
  {
    SessionStore store(dir.path());
    SampleSpec spec;
    spec.n = 20;
    spec.seed = 3;
    id = store.create(g, spec);
    const LabelSession session = store.snapshot(id);
    for (const auto& p : session.pairs()) {
      const int i = static_cast<int>((p.a - 1) / 2);
      store.submit_label(id, p.pair_id, match[i] == 1);
    }
  }
  SessionStore replayed(dir.path());
  const auto live = replayed.live_precision(id, thresholds);
  const auto from_log = precision_curve(read_labels(replayed.labels_path(id)), thresholds);
  o.detail << "; replayed " << replayed.stats(id).labeled << " labels";
  o.require(live == offline, "service curve differs from offline curve");
  o.require(from_log == offline, "label log curve differs from offline curve");
}

void grid_exactness(Outcome& o) {
  std::mt19937_64 rng(77);
  std::vector<Image> tiles(4, Image(kTileSize, kTileSize, 3));
  for (auto& t : tiles) {
    for (auto& p : t.pixels) p = static_cast<std::uint8_t>(rng());
  }
  const Grid g = compose_grid(tiles[0], std::span<const Image>(tiles).subspan(1));
  int exact = 0;
  for (int s = 0; s < 4; ++s) exact += extract_slot(g.canvas, s) == tiles[s];
  std::uint64_t ones = 0, outside = 0;
  for (std::int64_t y = 0; y < kCanvasSize; ++y) {
    for (std::int64_t x = 0; x < kCanvasSize; ++x) {
      if (g.mask.at(x, y) == 1) {
        ++ones;
        if (x > 511 || y > 511) ++outside;
      }
    }
  }
  o.detail << exact << "/4 slots pixel-identical, mask ones " << ones << ", outside quadrant "
           << outside;
  o.require(exact == 4, "round trip not pixel-identical");
  o.require(ones == 262144 && outside == 0, "loss mask wrong");
}

void guidance_identities(Outcome& o) {
  std::mt19937_64 rng(99);
  std::normal_distribution<float> nd(0.0f, 3.0f);
  auto vec = [&] {
    std::vector<float> v(64);
    for (auto& x : v) x = nd(rng);
    return v;
  };
  std::uint64_t failures = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = vec(), b = vec(), c = vec();
    const double gi = 0.5 + (rng() % 1000) / 100.0;
    const double gt = 0.5 + (rng() % 1000) / 100.0;
    failures += cfg_single(a, b, 1.0) != b;
    failures += cfg_single(a, b, 0.0) != a;
    failures += cfg_dual(a, a, a, gt, gi) != a;
    failures += cfg_dual(a, b, c, 0.0, gi) != cfg_single(a, b, gi);
  }
  const auto ins = default_manifest(Task::kInsertion);
  const auto sub = default_manifest(Task::kSubjectGen);
  const auto ins_parsed = parse_manifest(encode_manifest(ins));
  const auto sub_parsed = parse_manifest(encode_manifest(sub));
  o.detail << failures << " identity failures over 1000 vector sets; insertion gamma_image "
           << ins_parsed.gamma_image << ", subject gamma_image " << sub_parsed.gamma_image
           << " gamma_text " << sub_parsed.gamma_text.value_or(-1);
  o.require(failures == 0, "identity violated");
  o.require(ins_parsed.gamma_image == 2.0 && !ins_parsed.gamma_text, "insertion defaults");
  o.require(sub_parsed.gamma_image == 1.5 && sub_parsed.gamma_text == 7.5, "subject defaults");
}

void benchmark_expansion(Outcome& o) {
  std::vector<BenchmarkQuadruplet> quads;
  for (int q = 0; q < 34; ++q) {
    BenchmarkQuadruplet b;
    b.object_id = "object" + std::to_string(q);
    for (int i = 0; i < 4; ++i) {
      b.captures.push_back({b.object_id + "/capture" + std::to_string(i) + ".jpg",
                            b.object_id + "/background" + std::to_string(i) + ".jpg"});
    }
    quads.push_back(std::move(b));
  }
  const auto samples = expand_quadruplets(quads);
  std::uint64_t leaks = 0;
  std::set<std::string> ids;
  for (const auto& s : samples) {
    ids.insert(s.sample_id);
    for (const auto& r : s.references) leaks += r == s.ground_truth;
  }
  o.detail << samples.size() << " samples, " << ids.size() << " distinct ids, " << leaks
           << " ground truths among their references";
  o.require(samples.size() == 136 && ids.size() == 136, "expected 136 samples");
  o.require(leaks == 0, "ground truth leaked into references");
}

void agreement_metric(Outcome& o) {
  const std::vector<float> ref{1, 0};
  const std::vector<float> near{0.8f, 0.6f};
  const std::vector<float> far{0.0f, 1.0f};
  // Hand-scored fixture: agree, agree, disagree, tie, agree -> 3.5 / 5.
  const std::vector<AgreementTriplet> fixture{{ref, near, far, 1},
                                              {ref, far, near, 2},
                                              {ref, near, far, 2},
                                              {ref, near, near, 1},
                                              {ref, far, near, 2}};
  const double acc = metric_agreement(fixture);
  const double tie = triplet_agreement(fixture[3]);

  const auto m = random_unit_vectors(3000, 32, 55);
  std::mt19937_64 rng(56);
  std::uint64_t asym = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const auto r = m.row(3 * i), a = m.row(3 * i + 1), b = m.row(3 * i + 2);
    const int choice = 1 + static_cast<int>(rng() % 2);
    const AgreementTriplet t{{r.begin(), r.end()}, {a.begin(), a.end()}, {b.begin(), b.end()},
                             choice};
    const AgreementTriplet swapped{t.ref, t.gen2, t.gen1, 3 - choice};
    asym += triplet_agreement(t) != triplet_agreement(swapped);
  }
  o.detail << "fixture accuracy " << acc << " (hand 0.7), tie " << tie << ", " << asym
           << " asymmetric of 1000";
  o.require(acc == 0.7, "fixture accuracy");
  o.require(tie == 0.5, "tie score");
  o.require(asym == 0, "choice permutation symmetry");
}

void end_to_end_determinism(Outcome& o) {
#ifndef FORGE_CLI_PATH
  o.require(false, "CLI path not configured at build time");
#else
  testing::TempDir dir;
  const auto info = write_fixture_corpus(dir / "corpus", FixtureSpec{});
  std::vector<std::string> outputs;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = dir / ("run" + std::to_string(run));
    const std::string cmd = std::string("\"") + FORGE_CLI_PATH + "\" --log-level=warn --seed 7" +
                            " --out \"" + out.string() + "\" pipeline_all --corpus \"" +
                            info.manifest.string() + "\" --no-cache > /dev/null";
    const int rc = std::system(cmd.c_str());
    o.require(rc == 0, "pipeline_all run " + std::to_string(run) + " failed");
    if (rc != 0) return;
    outputs.push_back(read_file(out / "dataset" / "examples.jsonl"));
  }
  const auto lines = std::count(outputs[0].begin(), outputs[0].end(), '\n');
  o.detail << "two runs, " << lines << " examples each, " << outputs[0].size() << " bytes";
  o.require(lines > 0, "no examples emitted");
  o.require(outputs[0] == outputs[1], "examples.jsonl differs between runs");
#endif
}

}  // namespace
}  // namespace forge

int main(int argc, char** argv) {
  // Optional arguments select criteria by name substring.
  const std::vector<std::string> filters(argv + 1, argv + argc);
  using forge::Check;
  const std::vector<std::pair<std::string, Check>> checks{
      {"exact_knn_oracle_equivalence", forge::exact_knn_oracle},
      {"approximate_index_recall", forge::approximate_recall},
      {"planted_recurrence_recovery", forge::planted_recovery},
      {"statistics_table_reproduction", forge::statistics_table},
      {"subsample_scaling_sanity", forge::scaling_sanity},
      {"precision_curve_oracle", forge::precision_oracle},
      {"grid_mask_exactness", forge::grid_exactness},
      {"guidance_identities", forge::guidance_identities},
      {"benchmark_expansion", forge::benchmark_expansion},
      {"agreement_metric", forge::agreement_metric},
      {"end_to_end_determinism", forge::end_to_end_determinism},
  };
  int failed = 0;
  std::size_t ran = 0;
  for (const auto& [name, check] : checks) {
    if (!filters.empty() &&
        std::none_of(filters.begin(), filters.end(),
                     [&](const std::string& f) { return name.find(f) != std::string::npos; })) {
      continue;
    }
    ++ran;
    forge::Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      check(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = forge::seconds_since(t0);
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << secs << " s): "
              << o.detail.str() << std::endl;
    failed += !o.pass;
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
