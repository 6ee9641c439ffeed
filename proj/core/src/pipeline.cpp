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


#include "forge/pipeline.hpp"

#include <map>

#include "forge/error.hpp"
#include "forge/hashing.hpp"
#include "forge/io.hpp"
#include "forge/recurrence_analysis.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

void PipelineConfig::validate() const {
  if (manifest.empty()) throw ValidationError("pipeline needs a corpus manifest");
  if (!fs::exists(manifest)) throw IoError("manifest not found: " + manifest.string());
  if (out_dir.empty()) throw ValidationError("pipeline needs an output directory");
  band.validate();
  if (k_max == 0) throw ValidationError("k_max must be positive");
  if (sidecar_dir && !fs::is_directory(*sidecar_dir)) {
    throw IoError("sidecar directory not found: " + sidecar_dir->string());
  }
}

namespace {

struct CacheEntry {
  std::string key;
  std::map<std::string, std::string> outputs;  // relative path -> sha256
  json info = json::object();
};

using Cache = std::map<std::string, CacheEntry>;

constexpr const char* kCacheFile = "pipeline_cache.json";

Cache load_cache(const fs::path& out_dir) {
  Cache cache;
  const fs::path path = out_dir / kCacheFile;
  if (!fs::exists(path)) return cache;
  try {
    const json j = json::parse(read_file(path));
    for (const auto& [name, e] : j.items()) {
      CacheEntry entry;
      entry.key = e.at("key").get<std::string>();
      entry.outputs = e.at("outputs").get<std::map<std::string, std::string>>();
      entry.info = e.value("info", json::object());
      cache[name] = std::move(entry);
    }
  } catch (const std::exception&) {
    cache.clear();  // an unreadable cache only costs a rebuild
  }
  return cache;
}

void save_cache(const fs::path& out_dir, const Cache& cache) {
  ordered_json j = ordered_json::object();
  for (const auto& [name, e] : cache) {
    ordered_json o;
    o["key"] = e.key;
    o["outputs"] = e.outputs;
    o["info"] = e.info;
    j[name] = std::move(o);
  }
  write_file_atomic(out_dir / kCacheFile, j.dump(2) + "\n");
}

bool outputs_intact(const fs::path& out_dir, const CacheEntry& e) {
  for (const auto& [rel, sha] : e.outputs) {
    const fs::path p = out_dir / rel;
    if (!fs::exists(p) || sha256_file(p) != sha) return false;
  }
  return !e.outputs.empty();
}

[[noreturn]] void rethrow_in_stage(const std::string& stage) {
  const std::string prefix = stage + " stage: ";
  try {
    throw;
  } catch (const AbortedError&) {
    throw;
  } catch (const TruncatedError& e) {
    throw TruncatedError(prefix + e.what());
  } catch (const FormatError& e) {
    throw FormatError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const NotFoundError& e) {
    throw NotFoundError(prefix + e.what());
  } catch (const ConflictError& e) {
    throw ConflictError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  } catch (const fs::filesystem_error& e) {
    throw IoError(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

std::string num(double v) { return json(v).dump(); }

}  // namespace

PipelineResult pipeline_all(const PipelineConfig& config,
                            const std::function<void(const StageReport&)>& on_stage) {
  config.validate();
  fs::create_directories(config.out_dir);
  const fs::path manifest_dir = config.manifest.parent_path();
  const fs::path image_root = config.image_root.value_or(manifest_dir);
  std::optional<fs::path> sidecars = config.sidecar_dir;
  if (!sidecars && fs::is_directory(manifest_dir / "sidecars")) {
    sidecars = manifest_dir / "sidecars";
  }

  Cache cache = config.use_cache ? load_cache(config.out_dir) : Cache{};
  PipelineResult result;

  std::optional<Corpus> corpus;
  std::shared_ptr<const FeatureMatrix> features;
  std::unique_ptr<Index> index;
  std::optional<KnnGraph> graph;

  auto get_corpus = [&]() -> const Corpus& {
    if (!corpus) {
      corpus = load_corpus(config.manifest);
      features = std::make_shared<const FeatureMatrix>(corpus->features);
    }
    return *corpus;
  };

  // Runs `body` unless the cached entry for `name` matches `key`. `body`
  // returns the files it wrote and may fill `info`.
  auto stage = [&](const std::string& name, const std::string& key,
                   const std::function<std::vector<fs::path>(json& info)>& body) -> json {
    StageReport report{name, false, key, {}};
    try {
      check_abort();
      auto it = cache.find(name);
      if (config.use_cache && it != cache.end() && it->second.key == key &&
          outputs_intact(config.out_dir, it->second)) {
        report.cached = true;
        for (const auto& [rel, _] : it->second.outputs) report.outputs.push_back(config.out_dir / rel);
      } else {
        CacheEntry entry;
        entry.key = key;
        report.outputs = body(entry.info);
        for (const auto& p : report.outputs) {
          entry.outputs[p.lexically_relative(config.out_dir).generic_string()] = sha256_file(p);
        }
        cache[name] = std::move(entry);
        if (config.use_cache) save_cache(config.out_dir, cache);
      }
    } catch (...) {
      rethrow_in_stage(name);
    }
    result.stages.push_back(report);
    if (on_stage) on_stage(report);
    return cache[name].info;
  };

  // index
  std::string index_key;
  try {
    const CorpusManifest m = read_manifest(config.manifest);
    Sha256 h;
    h.field("index/v1").file(config.manifest).file(m.objects_path).file(m.features_path);
    h.field(to_string(config.index.mode))
        .field(std::to_string(config.index.num_partitions))
        .field(std::to_string(config.index.probes))
        .field(std::to_string(config.index.kmeans_iterations))
        .field(std::to_string(config.seed));
    index_key = h.hex();
  } catch (...) {
    rethrow_in_stage("index");
  }
  const fs::path index_path = config.out_dir / "index.omix";
  stage("index", index_key, [&](json&) {
    IndexConfig ic = config.index;
    ic.seed = config.seed;
    ic.threads = config.threads;
    get_corpus();
    index = build_index(features, ic);
    save_index(index_path, *index);
    return std::vector<fs::path>{index_path};
  });

  // graph
  const std::string graph_key = Sha256()
                                    .field("graph/v1")
                                    .field(index_key)
                                    .field(num(config.band.lo))
                                    .field(num(config.band.hi))
                                    .field(std::to_string(config.k_max))
                                    .field(std::to_string(config.index.search_k))
                                    .hex();
  const fs::path graph_path = config.out_dir / "neighbors.jsonl";
  const fs::path graph_meta = config.out_dir / "neighbors.meta.json";
  stage("graph", graph_key, [&](json&) {
    const Corpus& c = get_corpus();
    if (!index) index = load_index(index_path, features);
    GraphOptions go;
    go.band = config.band;
    go.k_max = config.k_max;
    go.search_k = config.index.search_k;
    go.threads = config.threads;
    graph = build_graph(*index, c.records, go);
    write_graph(graph_path, *graph);
    return std::vector<fs::path>{graph_path, graph_meta};
  });
  auto get_graph = [&]() -> const KnnGraph& {
    if (!graph) graph = read_graph(graph_path);
    return *graph;
  };

  // stats
  const std::string stats_key = Sha256().field("stats/v1").field(graph_key).hex();
  const fs::path stats_path = config.out_dir / "stats.json";
  const json stats_info = stage("stats", stats_key, [&](json& info) {
    const RecurrenceStats st = degree_stats(get_graph(), get_corpus().records);
    write_file_atomic(stats_path, stats_report_json(st));
    info = {{"num_images", st.num_images},
            {"num_objects", st.num_objects},
            {"count_ge1", st.count_ge1},
            {"count_ge3", st.count_ge3}};
    return std::vector<fs::path>{stats_path};
  });
  result.stats = stats_from_counts(
      stats_info.value("num_images", std::uint64_t{0}),
      stats_info.value("num_objects", std::uint64_t{0}),
      stats_info.value("count_ge1", std::uint64_t{0}),
      stats_info.value("count_ge3", std::uint64_t{0}));

  // dataset
  std::string dataset_key;
  try {
    Sha256 h;
    h.field("dataset/v1")
        .field(graph_key)
        .field(to_string(config.task))
        .field(std::to_string(config.seed))
        .field(config.render_grids ? "grids" : "no-grids")
        .field(config.strict_sidecars ? "strict" : "lenient");
    if (sidecars) {
      std::vector<fs::path> files;
      for (const auto& e : fs::recursive_directory_iterator(*sidecars)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        h.field(f.lexically_relative(*sidecars).generic_string()).file(f);
      }
    }
    for (const auto& r : get_corpus().records) {
      if (!config.render_grids && r.image_size) continue;
      const fs::path p = image_root / r.image;
      h.field(r.image);
      if (fs::exists(p)) h.file(p);
    }
    dataset_key = h.hex();
  } catch (...) {
    rethrow_in_stage("dataset");
  }
  const fs::path dataset_dir = config.out_dir / "dataset";
  const json dataset_info = stage("dataset", dataset_key, [&](json& info) {
    fs::create_directories(dataset_dir);
    DatasetOptions opts;
    opts.task = config.task;
    opts.out_dir = dataset_dir;
    opts.sidecar_dir = sidecars;
    opts.image_root = image_root;
    opts.render_grids = config.render_grids;
    opts.strict_sidecars = config.strict_sidecars;
    opts.seed = config.seed;
    opts.threads = config.threads;
    const DatasetResult dr = emit_dataset(get_graph(), get_corpus().records, opts);
    info = {{"emitted", dr.assembly.emitted},
            {"skipped", dr.assembly.skipped},
            {"missing_scene", dr.missing_scene}};
    std::vector<fs::path> outs{dataset_dir / "examples.jsonl",
                               dataset_dir / "training_manifest.json"};
    if (config.render_grids) {
      std::vector<fs::path> grids;
      for (const auto& e : fs::directory_iterator(dataset_dir / "grids")) grids.push_back(e.path());
      std::sort(grids.begin(), grids.end());
      outs.insert(outs.end(), grids.begin(), grids.end());
    }
    return outs;
  });
  result.examples = dataset_info.value("emitted", std::uint64_t{0});
  result.skipped = dataset_info.value("skipped", std::uint64_t{0});
  result.missing_scene = dataset_info.value("missing_scene", std::uint64_t{0});
  return result;
}

}  // namespace forge
