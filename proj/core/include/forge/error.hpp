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

#pragma once

#include <stdexcept>
#include <string>

namespace forge {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller-supplied data or arguments violate a contract (bad band, duplicate
/// id, wrong tile size, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents do not match the expected format.
/// `line` is 1-based when the format is line oriented, 0 otherwise.
class FormatError : public IoError {
 public:
  FormatError(const std::string& what, std::size_t line = 0);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// The payload ended before the header-declared size.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Lookup of an id/key that does not exist.
class NotFoundError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// State conflict, e.g. labeling a pair twice.
class ConflictError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Raised by long-running stages when an abort was requested (Ctrl-C).
class AbortedError : public Error {
 public:
  AbortedError() : Error("aborted") {}
};

}  // namespace forge
