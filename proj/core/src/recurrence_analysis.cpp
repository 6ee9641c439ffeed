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

#include "forge/recurrence_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "forge/error.hpp"
#include "forge/parallel.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

std::vector<PairLabel> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file: " + path.string());
  std::vector<PairLabel> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = detail::parse_json_line(line, line_no);
    PairLabel l;
    l.id_a = detail::get_u64(j, "a", line_no);
    l.id_b = detail::get_u64(j, "b", line_no);
    l.similarity = detail::get_number(j, "sim", line_no);
    const json& m = detail::get_field(j, "match", line_no);
    if (!m.is_boolean()) throw FormatError("\"match\" must be a boolean", line_no);
    l.match = m.get<bool>();
    if (auto it = j.find("source"); it != j.end() && *it == "synthetic") {
      l.source = LabelSource::kSynthetic;
    }
    if (l.id_a == l.id_b) throw FormatError("label pairs an object with itself", line_no);
    out.push_back(l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Precision vs threshold

std::vector<double> threshold_sweep(double lo, double hi, double step) {
  if (!(step > 0) || !(lo <= hi)) {
    throw ValidationError("threshold sweep needs lo <= hi and step > 0");
  }
  const auto n = static_cast<std::uint64_t>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> out;
  out.reserve(n + 1);
  for (std::uint64_t i = 0; i <= n; ++i) {
    out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e9) / 1e9);
  }
  return out;
}

PrecisionCurve precision_curve(std::span<const PairLabel> labels,
                               std::span<const double> thresholds) {
  if (labels.empty()) throw ValidationError("precision_curve needs at least one label");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) {
      throw ValidationError("thresholds must be strictly increasing");
    }
  }

  // Sort similarities once; each threshold is then a suffix count.
  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(labels.size());
  for (const auto& l : labels) sorted.emplace_back(l.similarity, l.match);
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::uint64_t> suffix_matches(sorted.size() + 1, 0);
  for (std::size_t i = sorted.size(); i-- > 0;) {
    suffix_matches[i] = suffix_matches[i + 1] + (sorted[i].second ? 1 : 0);
  }

  PrecisionCurve curve;
  curve.points.reserve(thresholds.size());
  for (double t : thresholds) {
    auto first = std::lower_bound(sorted.begin(), sorted.end(), t,
                                  [](const auto& p, double v) { return p.first < v; });
    const auto idx = static_cast<std::size_t>(first - sorted.begin());
    PrecisionPoint p;
    p.threshold = t;
    p.support = sorted.size() - idx;
    p.matches = suffix_matches[idx];
    if (p.support > 0) {
      p.precision = static_cast<double>(p.matches) / static_cast<double>(p.support);
    }
    curve.points.push_back(p);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Similarity distribution

std::vector<std::vector<float>> raw_topk_similarities(
    const Index& index, std::span<const ObjectRecord> records, std::size_t k,
    std::uint32_t search_k, std::size_t threads) {
  const auto owner = rows_to_records(records, index.count());
  const std::size_t fetch = std::max<std::size_t>(k, search_k);
  std::vector<std::vector<float>> out(records.size());
  parallel_for(records.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      NeighborList cand = index.query(records[i].feature_row, fetch);
      for (const auto& n : cand.neighbors) {
        if (records[owner[n.id]].image == records[i].image) continue;
        out[i].push_back(n.similarity);
        if (out[i].size() == k) break;
      }
    }
  });
  return out;
}

SimilarityHistogram similarity_histogram(
    std::span<const std::vector<float>> per_object, std::uint32_t bins,
    const SimilarityBand& band) {
  if (bins < 1) throw ValidationError("histogram needs at least one bin");
  SimilarityHistogram h;
  h.bins = bins;
  h.band = band;
  h.counts.assign(bins, 0);
  const double width = 2.0 / bins;
  for (const auto& sims : per_object) {
    ++h.num_objects;
    bool any_in_band = false;
    for (float s : sims) {
      auto bin = static_cast<std::int64_t>(std::floor((static_cast<double>(s) + 1.0) / width));
      bin = std::clamp<std::int64_t>(bin, 0, bins - 1);
      ++h.counts[static_cast<std::size_t>(bin)];
      ++h.num_values;
      if (band.contains(s)) {
        ++h.values_in_band;
        any_in_band = true;
      }
    }
    if (any_in_band) ++h.objects_with_value_in_band;
  }
  if (h.num_values > 0) {
    h.fraction_in_band =
        static_cast<double>(h.values_in_band) / static_cast<double>(h.num_values);
  }
  if (h.num_objects > 0) {
    h.object_fraction_in_band = static_cast<double>(h.objects_with_value_in_band) /
                                static_cast<double>(h.num_objects);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Recurrence vs corpus size

ScalingCurve scaling_curve(const FeatureMatrix& features,
                           std::span<const ObjectRecord> records,
                           std::span<const double> fractions, std::uint64_t seed,
                           const GraphOptions& graph_options,
                           const IndexConfig& index_config) {
  const std::uint64_t n = records.size();
  if (features.count() != n) {
    throw ValidationError("scaling_curve: record and feature counts differ");
  }
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double f = fractions[i];
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("fractions must lie in (0, 1]");
    if (i > 0 && !(f > fractions[i - 1])) {
      throw ValidationError("fractions must be strictly increasing");
    }
    if (static_cast<std::uint64_t>(std::floor(f * static_cast<double>(n))) < 4) {
      throw ValidationError("fraction " + std::to_string(f) +
                            " yields fewer than 4 objects");
    }
  }

  ScalingCurve curve;
  curve.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> perm(n);

  for (double f : fractions) {
    const auto size = static_cast<std::uint64_t>(std::floor(f * static_cast<double>(n)));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::uint64_t i = 0; i < size; ++i) {
      std::swap(perm[i], perm[i + rng() % (n - i)]);
    }
    std::vector<std::uint64_t> chosen(perm.begin(), perm.begin() + size);
    std::sort(chosen.begin(), chosen.end());

    std::vector<ObjectRecord> sub;
    std::vector<std::uint64_t> rows;
    sub.reserve(size);
    rows.reserve(size);
    for (std::uint64_t pos : chosen) {
      sub.push_back(records[pos]);
      rows.push_back(records[pos].feature_row);
      sub.back().feature_row = sub.size() - 1;
    }
    auto matrix = std::make_shared<const FeatureMatrix>(features.gather(rows));
    auto index = build_index(matrix, index_config);
    KnnGraph g = build_graph(*index, sub, graph_options);
    RecurrenceStats s = degree_stats(g, sub);

    ScalingPoint p;
    p.fraction = f;
    p.subset_size = size;
    p.count_ge1 = s.count_ge1;
    p.count_ge3 = s.count_ge3;
    p.pct_ge1 = s.pct_ge1;
    p.pct_ge3 = s.pct_ge3;
    curve.points.push_back(p);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Per-class breakdown

std::vector<ClassRow> class_breakdown(const KnnGraph& graph,
                                      std::span<const ObjectRecord> records) {
  std::map<std::string, ClassRow> by_class;
  for (const auto& r : records) {
    ClassRow& row = by_class[r.class_label];
    row.class_label = r.class_label;
    ++row.num_objects;
    if (graph.degree(r.id) >= 3) ++row.num_with_ge3;
  }
  std::vector<ClassRow> out;
  out.reserve(by_class.size());
  for (auto& [_, row] : by_class) {
    row.percentage = 100.0 * static_cast<double>(row.num_with_ge3) /
                     static_cast<double>(row.num_objects);
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

std::string precision_report_json(const PrecisionCurve& curve) {
  ordered_json j;
  j["kind"] = "precision_curve";
  ordered_json pts = ordered_json::array();
  for (const auto& p : curve.points) {
    ordered_json o;
    o["threshold"] = p.threshold;
    o["precision"] = optional_number(p.precision);
    o["support"] = p.support;
    o["matches"] = p.matches;
    pts.push_back(std::move(o));
  }
  j["points"] = std::move(pts);
  return j.dump(2) + "\n";
}

std::string precision_report_csv(const PrecisionCurve& curve) {
  std::ostringstream s;
  s << "threshold,precision,support,matches\n";
  for (const auto& p : curve.points) {
    s << json(p.threshold).dump() << ',';
    if (p.precision) s << json(*p.precision).dump();
    s << ',' << p.support << ',' << p.matches << '\n';
  }
  return s.str();
}

std::string histogram_report_json(const SimilarityHistogram& h) {
  ordered_json j;
  j["kind"] = "similarity_histogram";
  j["bins"] = h.bins;
  j["range"] = json::array({-1.0, 1.0});
  j["counts"] = h.counts;
  j["band"] = json::array({h.band.lo, h.band.hi});
  j["num_objects"] = h.num_objects;
  j["num_values"] = h.num_values;
  j["values_in_band"] = h.values_in_band;
  j["fraction_in_band"] = h.fraction_in_band;
  j["objects_with_value_in_band"] = h.objects_with_value_in_band;
  j["object_fraction_in_band"] = h.object_fraction_in_band;
  return j.dump(2) + "\n";
}

std::string histogram_report_csv(const SimilarityHistogram& h) {
  std::ostringstream s;
  s << "bin_lo,bin_hi,count\n";
  const double width = 2.0 / h.bins;
  for (std::uint32_t i = 0; i < h.bins; ++i) {
    s << json(-1.0 + i * width).dump() << ',' << json(-1.0 + (i + 1) * width).dump()
      << ',' << h.counts[i] << '\n';
  }
  return s.str();
}

std::string scaling_report_json(const ScalingCurve& c) {
  ordered_json j;
  j["kind"] = "scaling_curve";
  j["seed"] = c.seed;
  ordered_json pts = ordered_json::array();
  for (const auto& p : c.points) {
    ordered_json o;
    o["fraction"] = p.fraction;
    o["subset_size"] = p.subset_size;
    o["count_ge1"] = p.count_ge1;
    o["count_ge3"] = p.count_ge3;
    o["pct_ge1"] = p.pct_ge1;
    o["pct_ge3"] = p.pct_ge3;
    pts.push_back(std::move(o));
  }
  j["points"] = std::move(pts);
  return j.dump(2) + "\n";
}

std::string scaling_report_csv(const ScalingCurve& c) {
  std::ostringstream s;
  s << "fraction,subset_size,count_ge1,count_ge3,pct_ge1,pct_ge3,seed\n";
  for (const auto& p : c.points) {
    s << json(p.fraction).dump() << ',' << p.subset_size << ',' << p.count_ge1 << ','
      << p.count_ge3 << ',' << json(p.pct_ge1).dump() << ',' << json(p.pct_ge3).dump()
      << ',' << c.seed << '\n';
  }
  return s.str();
}

std::string breakdown_report_json(const std::vector<ClassRow>& rows) {
  ordered_json j;
  j["kind"] = "class_breakdown";
  ordered_json arr = ordered_json::array();
  for (const auto& r : rows) {
    ordered_json o;
    o["class"] = r.class_label;
    o["num_objects"] = r.num_objects;
    o["num_with_ge3"] = r.num_with_ge3;
    o["percentage"] = r.percentage;
    arr.push_back(std::move(o));
  }
  j["classes"] = std::move(arr);
  return j.dump(2) + "\n";
}

std::string breakdown_report_csv(const std::vector<ClassRow>& rows) {
  std::ostringstream s;
  s << "class,num_objects,num_with_ge3,percentage\n";
  for (const auto& r : rows) {
    s << json(r.class_label).dump() << ',' << r.num_objects << ',' << r.num_with_ge3
      << ',' << json(r.percentage).dump() << '\n';
  }
  return s.str();
}

std::string stats_report_json(const RecurrenceStats& st) {
  ordered_json j;
  j["kind"] = "recurrence_stats";
  j["num_images"] = st.num_images;
  j["num_objects"] = st.num_objects;
  j["count_ge1"] = st.count_ge1;
  j["count_ge3"] = st.count_ge3;
  j["pct_ge1"] = st.pct_ge1;
  j["pct_ge3"] = st.pct_ge3;
  j["pct_ge1_text"] = format_percent(st.count_ge1, st.num_objects);
  j["pct_ge3_text"] = format_percent(st.count_ge3, st.num_objects);
  return j.dump(2) + "\n";
}

std::string stats_report_csv(const RecurrenceStats& st) {
  std::ostringstream s;
  s << "num_images,num_objects,count_ge1,count_ge3,pct_ge1,pct_ge3\n"
    << st.num_images << ',' << st.num_objects << ',' << st.count_ge1 << ','
    << st.count_ge3 << ',' << json(st.pct_ge1).dump() << ','
    << json(st.pct_ge3).dump() << '\n';
  return s.str();
}

}  // namespace forge
