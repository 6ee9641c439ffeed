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

#include "forge/io.hpp"

#include <sstream>
#include <system_error>

#include "forge/error.hpp"

namespace forge {

namespace fs = std::filesystem;

AtomicFileWriter::AtomicFileWriter(fs::path target, bool binary)
    : target_(std::move(target)) {
  if (target_.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target_.parent_path(), ec);
  }
  tmp_ = target_;
  tmp_ += ".tmp";
  auto mode = std::ios::out | std::ios::trunc;
  if (binary) mode |= std::ios::binary;
  out_.open(tmp_, mode);
  if (!out_) throw IoError("cannot open for writing: " + tmp_.string());
}

AtomicFileWriter::~AtomicFileWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    fs::remove(tmp_, ec);
  }
}

void AtomicFileWriter::commit() {
  out_.flush();
  if (!out_) throw IoError("write failed: " + tmp_.string());
  out_.close();
  std::error_code ec;
  fs::rename(tmp_, target_, ec);
  if (ec) {
    throw IoError("cannot rename " + tmp_.string() + " to " +
                  target_.string() + ": " + ec.message());
  }
  committed_ = true;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  AtomicFileWriter w(path, true);
  w.stream().write(content.data(), static_cast<std::streamsize>(content.size()));
  w.commit();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

std::atomic<bool>& abort_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

void check_abort() {
  if (abort_flag().load(std::memory_order_relaxed)) throw AbortedError();
}

}  // namespace forge
