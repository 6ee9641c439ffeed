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

// Internal JSON helpers shared by the JSONL readers and writers.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "forge/feature_store.hpp"

namespace forge::detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// The double whose shortest decimal form equals the shortest decimal form
/// of `f`. Serializing it prints "0.95" rather than "0.949999988079071", and
/// parsing it back and narrowing yields `f` again.
double float_for_json(float f);

json parse_json_line(std::string_view line, std::size_t line_no);

std::uint64_t get_u64(const json& j, const char* key, std::size_t line_no);
double get_number(const json& j, const char* key, std::size_t line_no);
std::string get_string(const json& j, const char* key, std::size_t line_no);
const json& get_field(const json& j, const char* key, std::size_t line_no);

json bbox_to_json(const BBox& b);
BBox bbox_from_json(const json& j, std::size_t line_no);

}  // namespace forge::detail
