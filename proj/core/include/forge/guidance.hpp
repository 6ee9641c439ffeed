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

// Classifier-free guidance combinators and the condition-dropout plan.
//
// Denoiser outputs are stored as float and combined in double, one element
// at a time, in the difference form
//
//   single: base + g * (cond - base)
//   dual:   (d00 + g_txt * (dOS - dO0)) + g_img * (dO0 - d00)
//
// so that the unit and zero scale identities hold bit for bit.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "forge/dataset_forge.hpp"

namespace forge {

using DenoiserOutput = std::vector<float>;

struct GuidanceConfig {
  double gamma_image = 2.0;
  std::optional<double> gamma_text;  // subject generation only

  void validate() const;
};

/// Insertion: image scale 2. Subject generation: image 1.5, text 7.5.
GuidanceConfig default_guidance(Task task);

/// d_uncond_ref + gamma_image * (d_cond - d_uncond_ref), elementwise.
DenoiserOutput cfg_single(std::span<const float> d_uncond_ref,
                          std::span<const float> d_cond, double gamma_image);

/// d00 + gamma_text * (dOS - dO0) + gamma_image * (dO0 - d00), elementwise.
/// d00: no condition. dO0: references only. dOS: references and text.
DenoiserOutput cfg_dual(std::span<const float> d00, std::span<const float> dO0,
                        std::span<const float> dOS, double gamma_text,
                        double gamma_image);

/// Combines with the config's scales: dual when gamma_text is set.
DenoiserOutput apply_guidance(const GuidanceConfig& cfg, std::span<const float> d00,
                              std::span<const float> dO0,
                              std::span<const float> dOS = {});

struct DropoutPlan {
  Task task = Task::kInsertion;
  double rate_refs = 0.10;
  double rate_text = 0.10;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> drop_refs;  // one flag per example
  std::vector<std::uint8_t> drop_text;  // all zero for insertion

  std::size_t size() const noexcept { return drop_refs.size(); }
  std::uint64_t count_refs() const;
  std::uint64_t count_text() const;
};

/// floor(rate * n) with a tolerance for rates that are not exact binary
/// fractions, so 0.29 * 100 gives 29.
std::uint64_t bucket_size(double rate, std::uint64_t n);

/// Disjoint random buckets of bucket_size(rate, n) examples each, chosen by
/// a seeded shuffle. Insertion plans leave drop_text empty of flags.
DropoutPlan dropout_plan(std::uint64_t n_examples, double rate_refs, double rate_text,
                         Task task, std::uint64_t seed);

}  // namespace forge
