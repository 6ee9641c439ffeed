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


#include "forge/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/io.hpp"

namespace forge {

namespace fs = std::filesystem;

double NormalSource::uniform() {
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

double NormalSource::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

using Vec = std::vector<double>;

Vec unit(NormalSource& src, std::uint32_t dim) {
  Vec v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& x : v) {
      x = src.normal();
      n2 += x * x;
    }
  } while (n2 == 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x *= inv;
  return v;
}

std::vector<float> to_unit_float(const Vec& v) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double inv = 1.0 / std::sqrt(n2);
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Members c + noise with E|noise|^2 = sigma2, normalized, retried until
/// every pairwise cosine lies in [lo, hi].
std::vector<std::vector<float>> members_around(NormalSource& src, const Vec& center,
                                               std::uint32_t count, double sigma2, double lo,
                                               double hi) {
  const std::uint32_t dim = static_cast<std::uint32_t>(center.size());
  const double scale = std::sqrt(sigma2 / dim);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    std::vector<std::vector<float>> out;
    for (std::uint32_t m = 0; m < count; ++m) {
      Vec v = center;
      for (auto& x : v) x += scale * src.normal();
      out.push_back(to_unit_float(v));
    }
    bool ok = true;
    for (std::uint32_t i = 0; i < count && ok; ++i) {
      for (std::uint32_t j = i + 1; j < count && ok; ++j) {
        const float s = cosine(out[i], out[j]);
        ok = s >= static_cast<float>(lo) && s <= static_cast<float>(hi);
      }
    }
    if (ok) return out;
  }
  throw ValidationError("could not plant a group with similarities in the requested range");
}

/// Noise energy giving an expected member cosine of `target`.
double sigma2_for(double target) { return 1.0 / target - 1.0; }

ObjectRecord make_record(std::uint64_t index, std::uint32_t group) {
  ObjectRecord r;
  r.id = index + 1;
  r.image = "images/" + std::to_string(r.id) + ".png";
  r.bbox = {8, 8, 32, 24};
  r.class_label = "class_" + std::to_string(group % 8);
  r.det_conf = 0.9;
  r.feature_row = index;
  r.image_size = ImageSize{64, 48};
  return r;
}

FeatureMatrix pack(const std::vector<std::vector<float>>& rows, std::uint32_t dim) {
  std::vector<float> data;
  data.reserve(rows.size() * dim);
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return FeatureMatrix(dim, std::move(data));
}

}  // namespace

FeatureMatrix random_unit_vectors(std::uint64_t count, std::uint32_t dim, std::uint64_t seed) {
  NormalSource src(seed);
  std::vector<std::vector<float>> rows;
  rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) rows.push_back(to_unit_float(unit(src, dim)));
  return pack(rows, dim);
}

PlantedCorpus planted_groups(const PlantedGroupsSpec& spec) {
  if (spec.groups == 0 || spec.per_group < 2 || spec.dim == 0) {
    throw ValidationError("planted groups need groups > 0, per_group >= 2, dim > 0");
  }
  NormalSource src(spec.seed);

  std::vector<Vec> centers;
  centers.reserve(spec.groups);
  for (int attempt = 0; centers.size() < spec.groups; ++attempt) {
    if (attempt > 1000 * static_cast<int>(spec.groups)) {
      throw ValidationError("could not place well separated group centers");
    }
    Vec c = unit(src, spec.dim);
    const bool far = std::all_of(centers.begin(), centers.end(), [&](const Vec& o) {
      return dot(c, o) < spec.max_center_cos;
    });
    if (far) centers.push_back(std::move(c));
  }

  const auto n_in_band = static_cast<std::uint32_t>(
      std::llround(spec.in_band_fraction * static_cast<double>(spec.groups)));
  std::vector<std::uint8_t> in_band(spec.groups, 0);
  std::fill_n(in_band.begin(), std::min(n_in_band, spec.groups), 1);
  for (std::uint32_t i = spec.groups; i > 1; --i) {
    std::swap(in_band[i - 1], in_band[src.engine()() % i]);
  }

  PlantedCorpus out;
  out.group_in_band = in_band;
  std::vector<std::vector<float>> rows;
  const double mid = 0.5 * (spec.in_band_lo + spec.in_band_hi);
  const double tight_target = 0.5 * (spec.tight_min + 1.0);
  for (std::uint32_t g = 0; g < spec.groups; ++g) {
    auto members = in_band[g]
                       ? members_around(src, centers[g], spec.per_group, sigma2_for(mid),
                                        spec.in_band_lo, spec.in_band_hi)
                       : members_around(src, centers[g], spec.per_group,
                                        sigma2_for(tight_target), spec.tight_min, 1.0);
    for (auto& m : members) {
      out.records.push_back(make_record(rows.size(), g));
      out.group_of.push_back(g);
      rows.push_back(std::move(m));
    }
  }
  out.features = pack(rows, spec.dim);
  return out;
}

PlantedCorpus partner_pairs(const PartnerPairsSpec& spec) {
  if (spec.count < 2 || spec.dim == 0) throw ValidationError("partner pairs need count >= 2");
  if (!(spec.paired_fraction >= 0.0 && spec.paired_fraction <= 1.0)) {
    throw ValidationError("paired_fraction must lie in [0, 1]");
  }
  NormalSource src(spec.seed);
  const std::uint64_t pairs = static_cast<std::uint64_t>(
      std::floor(spec.paired_fraction * static_cast<double>(spec.count) / 2.0 + 1e-9));

  std::vector<std::uint64_t> perm(spec.count);
  std::iota(perm.begin(), perm.end(), std::uint64_t{0});
  for (std::uint64_t i = spec.count; i > 1; --i) {
    std::swap(perm[i - 1], perm[src.engine()() % i]);
  }

  std::vector<std::vector<float>> rows(spec.count);
  PlantedCorpus out;
  out.group_of.assign(spec.count, 0);
  const double sigma2 = sigma2_for(0.5 * (spec.sim_lo + spec.sim_hi));
  for (std::uint64_t p = 0; p < pairs; ++p) {
    auto m = members_around(src, unit(src, spec.dim), 2, sigma2, spec.sim_lo, spec.sim_hi);
    rows[perm[2 * p]] = std::move(m[0]);
    rows[perm[2 * p + 1]] = std::move(m[1]);
    out.group_of[perm[2 * p]] = static_cast<std::uint32_t>(p);
    out.group_of[perm[2 * p + 1]] = static_cast<std::uint32_t>(p);
  }
  std::uint32_t next_group = static_cast<std::uint32_t>(pairs);
  for (std::uint64_t i = 2 * pairs; i < spec.count; ++i) {
    rows[perm[i]] = to_unit_float(unit(src, spec.dim));
    out.group_of[perm[i]] = next_group++;
  }
  out.group_in_band.assign(next_group, 0);
  std::fill_n(out.group_in_band.begin(), pairs, 1);
  for (std::uint64_t i = 0; i < spec.count; ++i) {
    out.records.push_back(make_record(i, out.group_of[i]));
  }
  out.features = pack(rows, spec.dim);
  return out;
}

// ---------------------------------------------------------------------------
// On-disk fixture

namespace {

std::array<std::uint8_t, 3> group_color(std::uint32_t g) {
  return {static_cast<std::uint8_t>(40 + (g * 67) % 200),
          static_cast<std::uint8_t>(40 + (g * 131) % 200),
          static_cast<std::uint8_t>(40 + (g * 29) % 200)};
}

Image background_image(std::int64_t w, std::int64_t h, std::uint64_t id) {
  Image img(w, h, 3);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      p[0] = static_cast<std::uint8_t>((x * 2 + id * 13) % 256);
      p[1] = static_cast<std::uint8_t>((y * 3 + id * 7) % 256);
      p[2] = static_cast<std::uint8_t>(128);
    }
  }
  return img;
}

}  // namespace

FixtureInfo write_fixture_corpus(const fs::path& dir, const FixtureSpec& spec) {
  PlantedGroupsSpec gs;
  gs.groups = spec.groups;
  gs.per_group = spec.per_group;
  gs.dim = spec.dim;
  gs.in_band_fraction = spec.in_band_fraction;
  gs.seed = spec.seed;
  const PlantedCorpus planted = planted_groups(gs);
  NormalSource src(spec.seed ^ 0x9e3779b97f4a7c15ULL);

  struct Entry {
    std::vector<float> feature;
    std::uint32_t group;
    bool low_confidence;
  };
  std::vector<Entry> entries;
  for (std::uint64_t i = 0; i < planted.records.size(); ++i) {
    auto row = planted.features.row(i);
    entries.push_back({std::vector<float>(row.begin(), row.end()), planted.group_of[i], false});
  }
  for (std::uint32_t i = 0; i < spec.low_confidence; ++i) {
    entries.push_back({to_unit_float(unit(src, spec.dim)), spec.groups + i, true});
  }
  for (std::size_t i = entries.size(); i > 1; --i) {
    std::swap(entries[i - 1], entries[src.engine()() % i]);
  }

  fs::create_directories(dir);
  if (spec.images) fs::create_directories(dir / "images");
  if (spec.sidecars) {
    fs::create_directories(dir / "sidecars" / "backgrounds");
    fs::create_directories(dir / "sidecars" / "captions");
  }

  FixtureInfo info;
  std::vector<ObjectRecord> records;
  std::vector<float> data;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    ObjectRecord r;
    r.id = 100 + 3 * i;
    r.image = "images/" + std::to_string(r.id) + ".png";
    r.bbox = {10 + static_cast<std::int64_t>(r.id * 7 % 20),
              8 + static_cast<std::int64_t>(r.id * 5 % 16), 40, 30};
    r.class_label = e.low_confidence ? "clutter" : "class_" + std::to_string(e.group % 5);
    r.det_conf = e.low_confidence ? 0.5 : 0.85 + 0.01 * static_cast<double>(e.group % 10);
    r.feature_row = i;
    r.image_size = ImageSize{spec.image_width, spec.image_height};
    // Stored unnormalized.
    for (float f : e.feature) data.push_back(f * 1.5f);
    if (!e.low_confidence && planted.group_in_band[e.group]) ++info.in_band_objects;

    if (spec.images) {
      Image img = background_image(spec.image_width, spec.image_height, r.id);
      const auto color = group_color(e.group);
      for (std::int64_t y = r.bbox.y; y < r.bbox.y + r.bbox.h; ++y) {
        for (std::int64_t x = r.bbox.x; x < r.bbox.x + r.bbox.w; ++x) {
          auto* p = img.at(x, y);
          for (int c = 0; c < 3; ++c) {
            p[c] = static_cast<std::uint8_t>(color[c] + ((x + y + r.id) % 7));
          }
        }
      }
      write_png(dir / r.image, img);
    }
    if (spec.sidecars) {
      const std::string id = std::to_string(r.id);
      write_png(dir / "sidecars" / "backgrounds" / (id + ".png"),
                background_image(spec.image_width, spec.image_height, r.id));
      write_file_atomic(dir / "sidecars" / "captions" / (id + ".txt"),
                        "a photo of object " + std::to_string(e.group) + "\n");
    }
    records.push_back(std::move(r));
  }

  write_objects(dir / "objects.jsonl", records);
  const FeatureMatrix features(spec.dim, std::move(data));
  write_features(dir / "features.bin", features);
  CorpusManifest m;
  m.objects_path = dir / "objects.jsonl";
  m.features_path = dir / "features.bin";
  m.dim = spec.dim;
  m.count = records.size();
  m.min_det_conf = 0.8;
  info.manifest = dir / "manifest.json";
  write_manifest(info.manifest, m);
  info.objects = records.size();
  return info;
}

}  // namespace forge
