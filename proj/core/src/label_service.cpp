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


#include "forge/label_service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

void SampleSpec::validate() const {
  if (n == 0) throw ValidationError("sample size must be positive");
  if (!(lo >= -1.0 && lo <= hi && hi <= 1.0)) {
    throw ValidationError("similarity range must satisfy -1 <= lo <= hi <= 1");
  }
}

std::vector<SampledPair> eligible_pairs(const KnnGraph& graph, double lo, double hi) {
  const float flo = static_cast<float>(lo);
  const float fhi = static_cast<float>(hi);
  std::vector<SampledPair> out;
  for (const auto& node : graph.nodes) {
    for (const auto& nb : node.neighbors) {
      if (nb.similarity < flo || nb.similarity > fhi || nb.id == node.id) continue;
      out.push_back({0, std::min(node.id, nb.id), std::max(node.id, nb.id), nb.similarity});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const SampledPair& x, const SampledPair& y) {
    return x.a != y.a ? x.a < y.a : x.b < y.b;
  });
  out.erase(std::unique(out.begin(), out.end(),
                        [](const SampledPair& x, const SampledPair& y) {
                          return x.a == y.a && x.b == y.b;
                        }),
            out.end());
  return out;
}

std::vector<SampledPair> sample_pairs(const KnnGraph& graph, const SampleSpec& spec) {
  spec.validate();
  if (graph.nodes.empty()) throw ValidationError("cannot sample pairs from an empty graph");
  std::vector<SampledPair> pool = eligible_pairs(graph, spec.lo, spec.hi);
  if (pool.size() < spec.n) {
    throw ValidationError("only " + std::to_string(pool.size()) +
                          " eligible edges in the similarity range, " +
                          std::to_string(spec.n) + " requested");
  }
  std::mt19937_64 rng(spec.seed);
  const std::size_t m = pool.size();
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (m - i));
    std::swap(pool[i], pool[j]);
    pool[i].pair_id = i;
  }
  pool.resize(spec.n);
  return pool;
}

// ---------------------------------------------------------------------------
// LabelSession

LabelSession::LabelSession(std::string id, SampleSpec spec, std::vector<SampledPair> pairs)
    : id_(std::move(id)), spec_(spec), pairs_(std::move(pairs)), labeled_(pairs_.size(), 0) {
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (pairs_[i].pair_id != i) throw ValidationError("pair ids must be queue positions");
  }
}

std::optional<SampledPair> LabelSession::next_pair() const {
  if (cursor_ >= pairs_.size()) return std::nullopt;
  return pairs_[cursor_];
}

const SampledPair& LabelSession::pair(std::uint64_t pair_id) const {
  if (pair_id >= pairs_.size()) {
    throw NotFoundError("unknown pair " + std::to_string(pair_id) + " in session " + id_);
  }
  return pairs_[pair_id];
}

bool LabelSession::is_labeled(std::uint64_t pair_id) const {
  return labeled_[pair(pair_id).pair_id] != 0;
}

const PairLabel& LabelSession::submit_label(std::uint64_t pair_id, bool match) {
  const SampledPair& p = pair(pair_id);
  if (labeled_[pair_id]) {
    throw ConflictError("pair " + std::to_string(pair_id) + " is already labeled");
  }
  labeled_[pair_id] = 1;
  labels_.push_back({p.a, p.b, static_cast<double>(p.similarity), match, LabelSource::kHuman});
  label_order_.push_back(pair_id);
  while (cursor_ < pairs_.size() && labeled_[cursor_]) ++cursor_;
  return labels_.back();
}

void LabelSession::set_threshold(double value) {
  if (!(value >= -1.0 && value <= 1.0)) {
    throw ValidationError("threshold must lie in [-1, 1]");
  }
  threshold_ = value;
}

PrecisionCurve LabelSession::live_precision(std::span<const double> thresholds) const {
  if (labels_.empty()) throw ValidationError("session " + id_ + " has no labels yet");
  return precision_curve(labels_, thresholds);
}

SessionStats LabelSession::stats() const {
  SessionStats s;
  s.total = pairs_.size();
  s.labeled = labels_.size();
  s.pending = s.total - s.labeled;
  s.matches = static_cast<std::uint64_t>(
      std::count_if(labels_.begin(), labels_.end(), [](const PairLabel& l) { return l.match; }));
  s.chosen_threshold = threshold_;
  return s;
}

LabelSession create_session(const KnnGraph& graph, std::string id, const SampleSpec& spec) {
  return LabelSession(std::move(id), spec, sample_pairs(graph, spec));
}

std::string encode_session(const LabelSession& s) {
  ordered_json j;
  j["session_id"] = s.id();
  j["spec"] = {{"n", s.spec().n}, {"seed", s.spec().seed}, {"lo", s.spec().lo},
               {"hi", s.spec().hi}};
  ordered_json pairs = ordered_json::array();
  for (const auto& p : s.pairs()) {
    ordered_json o;
    o["pair_id"] = p.pair_id;
    o["a"] = p.a;
    o["b"] = p.b;
    o["sim"] = detail::float_for_json(p.similarity);
    pairs.push_back(std::move(o));
  }
  j["pairs"] = std::move(pairs);
  j["chosen_threshold"] =
      s.chosen_threshold() ? ordered_json(*s.chosen_threshold()) : ordered_json(nullptr);
  return j.dump(1) + "\n";
}

LabelSession decode_session(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed session record: ") + e.what());
  }
  SampleSpec spec;
  const json& js = detail::get_field(j, "spec", 0);
  spec.n = detail::get_u64(js, "n", 0);
  spec.seed = detail::get_u64(js, "seed", 0);
  spec.lo = detail::get_number(js, "lo", 0);
  spec.hi = detail::get_number(js, "hi", 0);
  std::vector<SampledPair> pairs;
  const json& jp = detail::get_field(j, "pairs", 0);
  if (!jp.is_array()) throw FormatError("session pairs must be an array");
  for (const auto& p : jp) {
    pairs.push_back({detail::get_u64(p, "pair_id", 0), detail::get_u64(p, "a", 0),
                     detail::get_u64(p, "b", 0),
                     static_cast<float>(detail::get_number(p, "sim", 0))});
  }
  LabelSession s(detail::get_string(j, "session_id", 0), spec, std::move(pairs));
  if (auto it = j.find("chosen_threshold"); it != j.end() && it->is_number()) {
    s.set_threshold(it->get<double>());
  }
  return s;
}

std::string encode_label_line(std::uint64_t pair_id, const PairLabel& label) {
  ordered_json o;
  o["pair_id"] = pair_id;
  o["a"] = label.id_a;
  o["b"] = label.id_b;
  o["sim"] = detail::float_for_json(static_cast<float>(label.similarity));
  o["match"] = label.match;
  return o.dump();
}

// ---------------------------------------------------------------------------
// SessionStore

namespace {

constexpr const char* kSessionFile = "session.json";
constexpr const char* kLabelFile = "labels.jsonl";

void check_id(const std::string& id) {
  const bool ok = !id.empty() && id.size() <= 64 && id.front() != '.' &&
                  std::all_of(id.begin(), id.end(), [](unsigned char c) {
                    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
                  });
  if (!ok) throw ValidationError("invalid session id: " + id);
}

void append_durable(const fs::path& path, const std::string& line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open label log " + path.string() + ": " + std::strerror(errno));
  std::string buf = line + "\n";
  const char* p = buf.data();
  std::size_t left = buf.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw IoError("cannot append to label log: " + std::string(std::strerror(err)));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  if (!synced) throw IoError("cannot sync label log " + path.string());
}

}  // namespace

SessionStore::SessionStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::exists(entry.path() / kSessionFile)) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) load(d);
}

void SessionStore::load(const fs::path& dir) {
  auto session = std::make_unique<LabelSession>(decode_session(read_file(dir / kSessionFile)));
  const fs::path log = dir / kLabelFile;
  if (fs::exists(log)) {
    const std::string text = read_file(log);
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      const std::size_t end = text.find('\n', pos);
      ++line_no;
      if (end == std::string::npos) {
        // A torn final write never reached an acknowledgement; drop it.
        fs::resize_file(log, pos);
        break;
      }
      const std::string_view line(text.data() + pos, end - pos);
      pos = end + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      const json j = detail::parse_json_line(line, line_no);
      const std::uint64_t pair_id = detail::get_u64(j, "pair_id", line_no);
      const SampledPair& p = session->pair(pair_id);
      if (p.a != detail::get_u64(j, "a", line_no) || p.b != detail::get_u64(j, "b", line_no)) {
        throw FormatError("label log entry does not match the sampled pair", line_no);
      }
      const json& m = detail::get_field(j, "match", line_no);
      if (!m.is_boolean()) throw FormatError("match must be a boolean", line_no);
      try {
        session->submit_label(pair_id, m.get<bool>());
      } catch (const ConflictError& e) {
        throw FormatError(std::string("label log: ") + e.what(), line_no);
      }
    }
  }
  const std::string id = session->id();
  if (dir.filename() != id) {
    throw FormatError("session directory " + dir.string() + " holds session " + id);
  }
  sessions_[id] = std::move(session);
}

void SessionStore::save_session(const LabelSession& s) const {
  write_file_atomic(root_ / s.id() / kSessionFile, encode_session(s));
}

std::string SessionStore::create(const KnnGraph& graph, const SampleSpec& spec, std::string id) {
  std::lock_guard lock(mu_);
  if (id.empty()) {
    std::uint64_t k = sessions_.size() + 1;
    while (sessions_.count(std::to_string(k))) ++k;
    id = std::to_string(k);
  }
  check_id(id);
  if (sessions_.count(id) || fs::exists(root_ / id)) {
    throw ConflictError("session already exists: " + id);
  }
  auto session = std::make_unique<LabelSession>(create_session(graph, id, spec));
  fs::create_directories(root_ / id);
  save_session(*session);
  write_file_atomic(root_ / id / kLabelFile, "");
  sessions_[id] = std::move(session);
  return id;
}

std::vector<std::string> SessionStore::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  return ids;
}

bool SessionStore::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return sessions_.count(id) != 0;
}

LabelSession& SessionStore::get(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session: " + id);
  return *it->second;
}

const LabelSession& SessionStore::get(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session: " + id);
  return *it->second;
}

LabelSession SessionStore::snapshot(const std::string& id) const {
  std::lock_guard lock(mu_);
  return get(id);
}

std::optional<SampledPair> SessionStore::next_pair(const std::string& id) const {
  std::lock_guard lock(mu_);
  return get(id).next_pair();
}

SampledPair SessionStore::pair(const std::string& id, std::uint64_t pair_id) const {
  std::lock_guard lock(mu_);
  return get(id).pair(pair_id);
}

SessionStats SessionStore::submit_label(const std::string& id, std::uint64_t pair_id,
                                        bool match) {
  std::lock_guard lock(mu_);
  LabelSession& s = get(id);
  const SampledPair& p = s.pair(pair_id);
  if (s.is_labeled(pair_id)) {
    throw ConflictError("pair " + std::to_string(pair_id) + " is already labeled");
  }
  const PairLabel label{p.a, p.b, static_cast<double>(p.similarity), match, LabelSource::kHuman};
  append_durable(labels_path(id), encode_label_line(pair_id, label));
  s.submit_label(pair_id, match);
  return s.stats();
}

void SessionStore::set_threshold(const std::string& id, double value) {
  std::lock_guard lock(mu_);
  LabelSession& s = get(id);
  LabelSession updated = s;
  updated.set_threshold(value);
  save_session(updated);
  s = std::move(updated);
}

PrecisionCurve SessionStore::live_precision(const std::string& id,
                                            std::span<const double> thresholds) const {
  std::lock_guard lock(mu_);
  return get(id).live_precision(thresholds);
}

SessionStats SessionStore::stats(const std::string& id) const {
  std::lock_guard lock(mu_);
  return get(id).stats();
}

fs::path SessionStore::labels_path(const std::string& id) const {
  return root_ / id / kLabelFile;
}

}  // namespace forge
