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

#include "forge/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "forge/error.hpp"

namespace forge {

namespace {

void check_scale(double g, const char* name) {
  if (!std::isfinite(g) || g < 0.0) {
    throw ValidationError(std::string(name) + " must be finite and >= 0");
  }
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ValidationError("denoiser outputs differ in length: " + std::to_string(a) +
                          " vs " + std::to_string(b));
  }
}

}  // namespace

void GuidanceConfig::validate() const {
  check_scale(gamma_image, "gamma_image");
  if (gamma_text) check_scale(*gamma_text, "gamma_text");
}

GuidanceConfig default_guidance(Task task) {
  if (task == Task::kInsertion) return {2.0, std::nullopt};
  return {1.5, 7.5};
}

DenoiserOutput cfg_single(std::span<const float> d_uncond_ref,
                          std::span<const float> d_cond, double gamma_image) {
  check_lengths(d_uncond_ref.size(), d_cond.size());
  DenoiserOutput out(d_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double base = d_uncond_ref[i];
    out[i] = static_cast<float>(base + gamma_image * (double{d_cond[i]} - base));
  }
  return out;
}

DenoiserOutput cfg_dual(std::span<const float> d00, std::span<const float> dO0,
                        std::span<const float> dOS, double gamma_text,
                        double gamma_image) {
  check_lengths(d00.size(), dO0.size());
  check_lengths(d00.size(), dOS.size());
  DenoiserOutput out(d00.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double none = d00[i];
    const double refs = dO0[i];
    const double both = dOS[i];
    out[i] = static_cast<float>((none + gamma_text * (both - refs)) +
                                gamma_image * (refs - none));
  }
  return out;
}

DenoiserOutput apply_guidance(const GuidanceConfig& cfg, std::span<const float> d00,
                              std::span<const float> dO0, std::span<const float> dOS) {
  cfg.validate();
  if (cfg.gamma_text) return cfg_dual(d00, dO0, dOS, *cfg.gamma_text, cfg.gamma_image);
  return cfg_single(d00, dO0, cfg.gamma_image);
}

std::uint64_t DropoutPlan::count_refs() const {
  return static_cast<std::uint64_t>(std::count(drop_refs.begin(), drop_refs.end(), 1));
}

std::uint64_t DropoutPlan::count_text() const {
  return static_cast<std::uint64_t>(std::count(drop_text.begin(), drop_text.end(), 1));
}

std::uint64_t bucket_size(double rate, std::uint64_t n) {
  return static_cast<std::uint64_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
}

DropoutPlan dropout_plan(std::uint64_t n_examples, double rate_refs, double rate_text,
                         Task task, std::uint64_t seed) {
  auto check_rate = [](double r, const char* name) {
    if (!(r >= 0.0 && r <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0, 1]");
  };
  check_rate(rate_refs, "rate_refs");
  check_rate(rate_text, "rate_text");
  if (task == Task::kSubjectGen && rate_refs + rate_text > 1.0 + 1e-12) {
    throw ValidationError("dropout rates sum to more than 1");
  }

  DropoutPlan plan;
  plan.task = task;
  plan.rate_refs = rate_refs;
  plan.rate_text = task == Task::kSubjectGen ? rate_text : 0.0;
  plan.seed = seed;
  plan.drop_refs.assign(n_examples, 0);
  plan.drop_text.assign(n_examples, 0);

  // Fisher-Yates with a modulo draw, independent of the standard library.
  std::vector<std::uint64_t> perm(n_examples);
  std::iota(perm.begin(), perm.end(), std::uint64_t{0});
  std::mt19937_64 rng(seed);
  for (std::uint64_t i = n_examples; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng() % i]);
  }

  const std::uint64_t n_refs = bucket_size(rate_refs, n_examples);
  const std::uint64_t n_text = task == Task::kSubjectGen ? bucket_size(rate_text, n_examples) : 0;
  for (std::uint64_t i = 0; i < n_refs; ++i) plan.drop_refs[perm[i]] = 1;
  for (std::uint64_t i = n_refs; i < std::min(n_examples, n_refs + n_text); ++i) plan.drop_text[perm[i]] = 1;
  return plan;
}

}  // namespace forge
