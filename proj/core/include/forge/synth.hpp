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


// Synthetic corpora with planted recurrences, used by tests, benchmarks,
// demos and the `forge synth` command.
//
// Randomness comes from mt19937_64 with a Box-Muller normal draw written
// here, so a seed yields the same corpus with any standard library.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "forge/feature_store.hpp"

namespace forge {

class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : rng_(seed) {}
  double uniform();  // [0, 1)
  double normal();
  std::mt19937_64& engine() noexcept { return rng_; }

 private:
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Rows drawn uniformly from the unit sphere.
FeatureMatrix random_unit_vectors(std::uint64_t count, std::uint32_t dim, std::uint64_t seed);

struct PlantedCorpus {
  FeatureMatrix features;  // unit rows
  std::vector<ObjectRecord> records;
  std::vector<std::uint32_t> group_of;  // per object
  std::vector<std::uint8_t> group_in_band;
};

/// Groups of near-identical objects around well separated centers. A
/// fraction of groups has every within-group similarity inside
/// [in_band_lo, in_band_hi]; the others are tighter than tight_min.
struct PlantedGroupsSpec {
  std::uint32_t groups = 1000;
  std::uint32_t per_group = 4;
  std::uint32_t dim = 128;
  double in_band_fraction = 0.7;
  double max_center_cos = 0.4;
  double in_band_lo = 0.95;
  double in_band_hi = 0.97;
  double tight_min = 0.98;
  std::uint64_t seed = 1;
};

/// Objects are stored group by group with ids 1..N, one image each.
PlantedCorpus planted_groups(const PlantedGroupsSpec& spec);

/// A fraction of objects arranged in partner pairs with similarity in
/// [sim_lo, sim_hi]; the rest are unrelated random vectors. Pair members
/// sit at random positions.
struct PartnerPairsSpec {
  std::uint64_t count = 50000;
  std::uint32_t dim = 64;
  double paired_fraction = 0.4;
  double sim_lo = 0.94;
  double sim_hi = 0.96;
  std::uint64_t seed = 1;
};

PlantedCorpus partner_pairs(const PartnerPairsSpec& spec);

/// A small on-disk corpus with images and scene sidecars:
///
///   <dir>/manifest.json, objects.jsonl, features.bin
///   <dir>/images/<id>.png
///   <dir>/sidecars/backgrounds/<id>.png, sidecars/captions/<id>.txt
struct FixtureSpec {
  std::uint32_t groups = 24;
  std::uint32_t per_group = 4;
  std::uint32_t dim = 64;
  double in_band_fraction = 0.75;
  std::uint32_t low_confidence = 6;  // extra objects below the cutoff
  std::int64_t image_width = 96;
  std::int64_t image_height = 72;
  bool images = true;
  bool sidecars = true;
  std::uint64_t seed = 7;
};

struct FixtureInfo {
  std::filesystem::path manifest;
  std::uint64_t objects = 0;        // including low-confidence ones
  std::uint64_t in_band_objects = 0;  // objects that should yield examples
};

FixtureInfo write_fixture_corpus(const std::filesystem::path& dir, const FixtureSpec& spec);

}  // namespace forge
