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

#include "json_io.hpp"

#include <charconv>
#include <cstdlib>

#include "forge/error.hpp"

namespace forge::detail {

double float_for_json(float f) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), f);
  *res.ptr = '\0';
  return std::strtod(buf, nullptr);
}

json parse_json_line(std::string_view line, std::size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed JSON: ") + e.what(), line_no);
  }
}

const json& get_field(const json& j, const char* key, std::size_t line_no) {
  if (!j.is_object()) throw FormatError("expected a JSON object", line_no);
  auto it = j.find(key);
  if (it == j.end()) {
    throw FormatError(std::string("missing field \"") + key + "\"", line_no);
  }
  return *it;
}

std::uint64_t get_u64(const json& j, const char* key, std::size_t line_no) {
  const json& v = get_field(j, key, line_no);
  if (!v.is_number_integer() ||
      (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw FormatError(std::string("field \"") + key +
                          "\" must be a non-negative integer",
                      line_no);
  }
  return v.get<std::uint64_t>();
}

double get_number(const json& j, const char* key, std::size_t line_no) {
  const json& v = get_field(j, key, line_no);
  if (!v.is_number()) {
    throw FormatError(std::string("field \"") + key + "\" must be a number",
                      line_no);
  }
  return v.get<double>();
}

std::string get_string(const json& j, const char* key, std::size_t line_no) {
  const json& v = get_field(j, key, line_no);
  if (!v.is_string()) {
    throw FormatError(std::string("field \"") + key + "\" must be a string",
                      line_no);
  }
  return v.get<std::string>();
}

json bbox_to_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

BBox bbox_from_json(const json& j, std::size_t line_no) {
  if (!j.is_array() || j.size() != 4) {
    throw FormatError("bbox must be an array [x, y, w, h]", line_no);
  }
  for (const auto& v : j) {
    if (!v.is_number_integer()) {
      throw FormatError("bbox entries must be integers", line_no);
    }
  }
  return BBox{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(),
              j[2].get<std::int64_t>(), j[3].get<std::int64_t>()};
}

}  // namespace forge::detail
