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


// HTTP front end for SessionStore.
//
//   POST /api/session                      create {"id"?, "n", "seed", "lo", "hi"}
//   GET  /api/sessions                     session ids
//   GET  /api/session/{id}                 session record
//   GET  /api/session/{id}/next            pair card or {"done": true}
//   POST /api/session/{id}/label           {"pair_id", "match"}
//   GET  /api/session/{id}/precision       ?step=0.005&lo=0.85&hi=1.0
//   POST /api/session/{id}/threshold       {"value"}
//   GET  /api/session/{id}/stats
//   GET  /api/session/{id}/labels          label log download
//   GET  /crops/{pair_id}/{a|b}.png        ?session={id}
//   GET  /                                 labeling page
//
// Errors are JSON {"error": message} with 400, 404, 409 or 500.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "forge/feature_store.hpp"
#include "forge/label_service.hpp"
#include "forge/recurrence_graph.hpp"

namespace forge {

struct LabelServerOptions {
  std::string host = "127.0.0.1";
  int port = 7341;  // 0 binds any free port
  /// Directory with index.html and assets. The built-in page is used if unset.
  std::optional<std::filesystem::path> ui_dir;
  /// Root for resolving record image paths when cutting crops.
  std::filesystem::path image_root;
};

/// PNG of the record's bbox cut from its source image.
std::string render_crop(const ObjectRecord& record, const std::filesystem::path& image_root);

/// The built-in single-page labeling UI.
const std::string& builtin_ui_page();

class LabelServer {
 public:
  /// `graph` may be null, in which case sessions cannot be created over HTTP.
  LabelServer(SessionStore& store, const KnnGraph* graph,
              std::span<const ObjectRecord> records, LabelServerOptions options);
  ~LabelServer();

  LabelServer(const LabelServer&) = delete;
  LabelServer& operator=(const LabelServer&) = delete;

  /// Binds the listening socket and returns the bound port.
  int bind();
  /// Serves until stop(). Calls bind() first if needed.
  void serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace forge
