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


#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "forge/error.hpp"
#include "forge/guidance.hpp"

namespace forge {
namespace {

std::vector<float> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<float> nd(0.0f, 2.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

TEST(CfgSingle, Identities) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_vec(rng, 32);
    const auto b = random_vec(rng, 32);
    EXPECT_EQ(cfg_single(a, b, 1.0), b);
    EXPECT_EQ(cfg_single(a, b, 0.0), a);
  }
}

TEST(CfgSingle, ZeroBaseScales) {
  const std::vector<float> zero{0, 0}, cond{1, 2};
  EXPECT_EQ(cfg_single(zero, cond, 2.0), (std::vector<float>{2, 4}));
}

TEST(CfgSingle, LengthMismatch) {
  const std::vector<float> a{1, 2}, b{1};
  EXPECT_THROW(cfg_single(a, b, 2.0), ValidationError);
}

TEST(CfgDual, Identities) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_vec(rng, 16);
    const auto b = random_vec(rng, 16);
    const auto c = random_vec(rng, 16);
    EXPECT_EQ(cfg_dual(a, a, a, 7.5, 1.5), a);
    EXPECT_EQ(cfg_dual(a, b, c, 1.0, 1.0), c);
    EXPECT_EQ(cfg_dual(a, b, c, 0.0, 1.7), cfg_single(a, b, 1.7));
  }
}

TEST(CfgDual, HandEvaluated) {
  const std::vector<float> d00{0}, dO0{1}, dOS{2};
  EXPECT_EQ(cfg_dual(d00, dO0, dOS, 7.5, 1.5), (std::vector<float>{9}));
}

TEST(ApplyGuidance, DispatchesOnConfig) {
  const std::vector<float> d00{0}, dO0{1}, dOS{2};
  EXPECT_EQ(apply_guidance(default_guidance(Task::kInsertion), d00, dO0),
            (std::vector<float>{2}));
  EXPECT_EQ(apply_guidance(default_guidance(Task::kSubjectGen), d00, dO0, dOS),
            (std::vector<float>{9}));
  EXPECT_THROW(apply_guidance(default_guidance(Task::kSubjectGen), d00, dO0), ValidationError);
}

TEST(GuidanceConfig, Defaults) {
  const auto ins = default_guidance(Task::kInsertion);
  EXPECT_EQ(ins.gamma_image, 2.0);
  EXPECT_FALSE(ins.gamma_text.has_value());
  const auto sub = default_guidance(Task::kSubjectGen);
  EXPECT_EQ(sub.gamma_image, 1.5);
  EXPECT_EQ(*sub.gamma_text, 7.5);
  GuidanceConfig bad;
  bad.gamma_image = std::nan("");
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(BucketSize, FloorWithTolerance) {
  EXPECT_EQ(bucket_size(0.10, 100), 10u);
  EXPECT_EQ(bucket_size(0.29, 100), 29u);
  EXPECT_EQ(bucket_size(0.10, 15), 1u);
  EXPECT_EQ(bucket_size(0.0, 1000), 0u);
  EXPECT_EQ(bucket_size(1.0, 7), 7u);
}

TEST(DropoutPlan, TenAndTenDisjoint) {
  const auto p = dropout_plan(100, 0.10, 0.10, Task::kSubjectGen, 5);
  EXPECT_EQ(p.size(), 100u);
  EXPECT_EQ(p.count_refs(), 10u);
  EXPECT_EQ(p.count_text(), 10u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_FALSE(p.drop_refs[i] && p.drop_text[i]);
}

TEST(DropoutPlan, ZeroRateNoFlags) {
  const auto p = dropout_plan(50, 0.0, 0.0, Task::kSubjectGen, 5);
  EXPECT_EQ(p.count_refs(), 0u);
  EXPECT_EQ(p.count_text(), 0u);
}

TEST(DropoutPlan, InsertionNeverDropsText) {
  const auto p = dropout_plan(100, 0.10, 0.5, Task::kInsertion, 5);
  EXPECT_EQ(p.count_refs(), 10u);
  EXPECT_EQ(p.count_text(), 0u);
}

TEST(DropoutPlan, SeedDeterminesPlan) {
  const auto a = dropout_plan(1000, 0.1, 0.1, Task::kSubjectGen, 9);
  const auto b = dropout_plan(1000, 0.1, 0.1, Task::kSubjectGen, 9);
  const auto c = dropout_plan(1000, 0.1, 0.1, Task::kSubjectGen, 10);
  EXPECT_EQ(a.drop_refs, b.drop_refs);
  EXPECT_EQ(a.drop_text, b.drop_text);
  EXPECT_NE(a.drop_refs, c.drop_refs);
}

TEST(DropoutPlan, RejectsBadRates) {
  EXPECT_THROW(dropout_plan(10, -0.1, 0.1, Task::kSubjectGen, 0), ValidationError);
  EXPECT_THROW(dropout_plan(10, 0.7, 0.7, Task::kSubjectGen, 0), ValidationError);
}

}  // namespace
}  // namespace forge
