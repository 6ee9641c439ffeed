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


#include "forge/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "forge/dataset_forge.hpp"
#include "forge/error.hpp"
#include "forge/eval_protocol.hpp"
#include "forge/feature_store.hpp"
#include "forge/io.hpp"
#include "forge/knn_index.hpp"
#include "forge/label_server.hpp"
#include "forge/label_service.hpp"
#include "forge/parallel.hpp"
#include "forge/pipeline.hpp"
#include "forge/recurrence_analysis.hpp"
#include "forge/recurrence_graph.hpp"
#include "forge/synth.hpp"

namespace forge::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  std::string out = ".";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::string log_level = "info";
};

struct IndexOptions {
  std::string mode = "exact";
  std::uint32_t partitions = 0;
  std::uint32_t probes = 0;
  std::uint32_t iterations = 10;
  std::uint32_t search_k = 16;
  std::string index_path;
};

struct BandOptions {
  double lo = 0.93;
  double hi = 0.975;
  std::uint32_t k_max = 5;
};

void add_index_options(CLI::App* cmd, IndexOptions& o, bool allow_load) {
  cmd->add_option("--mode", o.mode, "Index type")
      ->check(CLI::IsMember({"exact", "partitioned"}))
      ->capture_default_str();
  cmd->add_option("--partitions", o.partitions,
                  "Partitions for the partitioned index (0 = ceil(sqrt(N)))")
      ->capture_default_str();
  cmd->add_option("--probes", o.probes, "Partitions probed per query (0 = ceil(sqrt(P)))")
      ->capture_default_str();
  cmd->add_option("--iterations", o.iterations, "k-means iterations")->capture_default_str();
  cmd->add_option("--search-k", o.search_k, "Candidates fetched per object before filtering")
      ->capture_default_str();
  if (allow_load) {
    cmd->add_option("--index", o.index_path, "Saved index (OMIX) to use instead of building")
        ->check(CLI::ExistingFile);
  }
}

void add_band_options(CLI::App* cmd, BandOptions& o) {
  cmd->add_option("--lo", o.lo, "Lower similarity bound, inclusive")->capture_default_str();
  cmd->add_option("--hi", o.hi, "Upper similarity bound, inclusive")->capture_default_str();
  cmd->add_option("--kmax", o.k_max, "Neighbors kept per object")->capture_default_str();
}

IndexConfig index_config(const IndexOptions& o, const GlobalOptions& g) {
  IndexConfig c;
  c.mode = parse_index_mode(o.mode);
  c.num_partitions = o.partitions;
  c.probes = o.probes;
  c.kmeans_iterations = o.iterations;
  c.search_k = o.search_k;
  c.seed = g.seed;
  c.threads = g.threads;
  return c;
}

SimilarityBand band_of(const BandOptions& o) {
  SimilarityBand b{o.lo, o.hi};
  b.validate();
  return b;
}

GraphOptions graph_options(const BandOptions& b, const IndexOptions& i, const GlobalOptions& g) {
  GraphOptions o;
  o.band = band_of(b);
  o.k_max = b.k_max;
  o.search_k = i.search_k;
  o.threads = g.threads;
  return o;
}

struct LoadedCorpus {
  Corpus corpus;
  std::shared_ptr<const FeatureMatrix> features;
};

LoadedCorpus load(const std::string& manifest) {
  LoadedCorpus lc{load_corpus(manifest), nullptr};
  lc.features = std::make_shared<const FeatureMatrix>(lc.corpus.features);
  spdlog::info("loaded {} objects of dim {} ({} below det_conf {})", lc.corpus.records.size(),
               lc.corpus.features.dim(), lc.corpus.dropped_low_confidence,
               lc.corpus.manifest.min_det_conf);
  return lc;
}

std::unique_ptr<Index> obtain_index(const IndexOptions& o, const GlobalOptions& g,
                                    const std::shared_ptr<const FeatureMatrix>& f) {
  if (!o.index_path.empty()) {
    spdlog::info("loading index {}", o.index_path);
    return load_index(o.index_path, f);
  }
  const auto start = std::chrono::steady_clock::now();
  auto index = build_index(f, index_config(o, g));
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (const auto* p = dynamic_cast<const PartitionedIndex*>(index.get())) {
    spdlog::info("built partitioned index: {} partitions, {} probes, {:.2f}s",
                 p->num_partitions(), p->probes(), secs);
  } else {
    spdlog::info("built exact index over {} rows, {:.2f}s", index->count(), secs);
  }
  return index;
}

fs::path out_path(const GlobalOptions& g, const std::string& name) {
  fs::create_directories(g.out);
  return fs::path(g.out) / name;
}

void write_pair(const GlobalOptions& g, const std::string& stem, const std::string& json_text,
                const std::string& csv_text) {
  write_file_atomic(out_path(g, stem + ".json"), json_text);
  write_file_atomic(out_path(g, stem + ".csv"), csv_text);
  spdlog::info("wrote {}/{}.json and .csv", g.out, stem);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p - start));
    if (p == std::string::npos) break;
    start = p + 1;
  }
  return out;
}

void configure_logging(const std::string& level) {
  auto logger = spdlog::get("forge");
  if (!logger) logger = spdlog::stderr_color_mt("forge");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

extern "C" void on_sigint(int) { abort_flag().store(true); }

}  // namespace

int run(int argc, const char* const* argv) {
  GlobalOptions g;
  CLI::App app{"Builds object-composition datasets from recurring objects in detection corpora.",
               "forge"};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--out", g.out, "Output directory for artifacts")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0 = FORGE_THREADS or all cores)")
      ->capture_default_str();
  app.add_option("--log-level", g.log_level, "Log verbosity")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  std::vector<std::pair<CLI::App*, std::function<void()>>> actions;

  // ---------------------------------------------------------------- index
  auto* index_cmd = app.add_subcommand("index", "Build or query the nearest-neighbor index");
  index_cmd->require_subcommand(1);

  std::string corpus_path;
  IndexOptions io;
  {
    auto* cmd = index_cmd->add_subcommand("build", "Build an index and save it as index.omix");
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    add_index_options(cmd, io, false);
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      auto index = obtain_index(io, g, lc.features);
      const fs::path p = out_path(g, "index.omix");
      save_index(p, *index);
      spdlog::info("wrote {}", p.string());
    });
  }

  std::uint64_t query_id = 0;
  std::size_t query_k = 5;
  {
    auto* cmd = index_cmd->add_subcommand("query", "Print the top-k neighbors of one object");
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    cmd->add_option("--id", query_id, "Object id to query")->required();
    cmd->add_option("--k", query_k, "Neighbors to return")->capture_default_str();
    add_index_options(cmd, io, true);
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      auto index = obtain_index(io, g, lc.features);
      const auto& recs = lc.corpus.records;
      const auto row_owner = rows_to_records(recs, index->count());
      auto it = std::find_if(recs.begin(), recs.end(),
                             [&](const ObjectRecord& r) { return r.id == query_id; });
      if (it == recs.end()) throw NotFoundError("unknown object id " + std::to_string(query_id));
      const NeighborList nl = query_topk(*index, it->feature_row, query_k);
      json out;
      out["id"] = query_id;
      json nn = json::array();
      for (const auto& n : nl.neighbors) {
        nn.push_back({{"id", recs[row_owner[n.id]].id},
                      {"sim", std::stod(fmt::format("{}", n.similarity))}});
      }
      out["nn"] = std::move(nn);
      std::cout << out.dump() << std::endl;
    });
  }

  std::size_t recall_queries = 1000;
  {
    auto* cmd = index_cmd->add_subcommand(
        "recall", "Measure recall@k of a partitioned index against exact search");
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    cmd->add_option("--k", query_k, "Neighbors compared per query")->capture_default_str();
    cmd->add_option("--queries", recall_queries, "Random query rows")->capture_default_str();
    add_index_options(cmd, io, true);
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      IndexOptions approx_opts = io;
      approx_opts.mode = "partitioned";
      auto approx = obtain_index(approx_opts, g, lc.features);
      auto exact = build_exact(lc.features);
      const std::uint64_t n = lc.features->count();
      std::vector<std::uint64_t> rows(n);
      for (std::uint64_t i = 0; i < n; ++i) rows[i] = i;
      std::mt19937_64 rng(g.seed);
      const std::size_t q = std::min<std::size_t>(recall_queries, n);
      for (std::size_t i = 0; i < q; ++i) std::swap(rows[i], rows[i + rng() % (n - i)]);
      rows.resize(q);
      std::sort(rows.begin(), rows.end());
      const double recall = recall_eval(*approx, *exact, rows, query_k, g.threads);
      json out;
      out["recall"] = recall;
      out["k"] = query_k;
      out["queries"] = q;
      std::cout << out.dump() << std::endl;
    });
  }

  // ---------------------------------------------------------------- graph
  auto* graph_cmd = app.add_subcommand("graph", "Build the band-filtered kNN graph");
  graph_cmd->require_subcommand(1);
  BandOptions bo;
  {
    auto* cmd = graph_cmd->add_subcommand("build", "Write neighbors.jsonl for a corpus");
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    add_band_options(cmd, bo);
    add_index_options(cmd, io, true);
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      const GraphOptions go = graph_options(bo, io, g);
      auto index = obtain_index(io, g, lc.features);
      const KnnGraph graph = build_graph(*index, lc.corpus.records, go);
      const fs::path p = out_path(g, "neighbors.jsonl");
      write_graph(p, graph);
      spdlog::info("graph: {} nodes, {} edges in [{}, {}], wrote {}", graph.nodes.size(),
                   graph.edge_count(), go.band.lo, go.band.hi, p.string());
    });
  }

  // -------------------------------------------------------------- analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Recurrence analyses and reports");
  analyze_cmd->require_subcommand(1);

  std::string labels_path;
  double sweep_lo = 0.85, sweep_hi = 1.0, sweep_step = 0.005;
  {
    auto* cmd = analyze_cmd->add_subcommand("precision",
                                            "Precision and support per similarity threshold");
    cmd->add_option("--labels", labels_path, "Labeled pairs (JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--from", sweep_lo, "First threshold")->capture_default_str();
    cmd->add_option("--to", sweep_hi, "Last threshold")->capture_default_str();
    cmd->add_option("--step", sweep_step, "Threshold step")->capture_default_str();
    actions.emplace_back(cmd, [&] {
      const auto labels = read_labels(labels_path);
      const auto curve = precision_curve(labels, threshold_sweep(sweep_lo, sweep_hi, sweep_step));
      write_pair(g, "precision", precision_report_json(curve), precision_report_csv(curve));
    });
  }

  std::uint32_t hist_bins = 200;
  std::size_t hist_k = 3;
  {
    auto* cmd = analyze_cmd->add_subcommand(
        "hist", "Histogram of each object's top-k similarities before band filtering");
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    cmd->add_option("--bins", hist_bins, "Bins over [-1, 1]")->capture_default_str();
    cmd->add_option("--k", hist_k, "Neighbors per object")->capture_default_str();
    add_band_options(cmd, bo);
    add_index_options(cmd, io, true);
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      auto index = obtain_index(io, g, lc.features);
      const auto sims =
          raw_topk_similarities(*index, lc.corpus.records, hist_k, io.search_k, g.threads);
      const auto h = similarity_histogram(sims, hist_bins, band_of(bo));
      write_pair(g, "histogram", histogram_report_json(h), histogram_report_csv(h));
    });
  }

  std::vector<double> fractions{0.25, 0.5, 1.0};
  {
    auto* cmd = analyze_cmd->add_subcommand(
        "scaling", "Share of objects with retained neighbors on random subsets");
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    cmd->add_option("--fractions", fractions, "Subset fractions in (0, 1], increasing")
        ->delimiter(',')
        ->capture_default_str();
    add_band_options(cmd, bo);
    add_index_options(cmd, io, false);
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      const auto curve = scaling_curve(*lc.features, lc.corpus.records, fractions, g.seed,
                                       graph_options(bo, io, g), index_config(io, g));
      write_pair(g, "scaling", scaling_report_json(curve), scaling_report_csv(curve));
    });
  }

  std::string graph_path;
  {
    auto* cmd = analyze_cmd->add_subcommand("breakdown",
                                            "Per-class share of objects with >= 3 neighbors");
    cmd->add_option("--graph", graph_path, "neighbors.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      const auto rows = class_breakdown(read_graph(graph_path), lc.corpus.records);
      write_pair(g, "breakdown", breakdown_report_json(rows), breakdown_report_csv(rows));
    });
  }

  std::uint64_t num_images = 0, num_objects = 0, count_ge1 = 0, count_ge3 = 0;
  {
    auto* cmd = analyze_cmd->add_subcommand(
        "stats", "Corpus statistics from a graph, or from published counts");
    auto* gopt = cmd->add_option("--graph", graph_path, "neighbors.jsonl")
                     ->check(CLI::ExistingFile);
    auto* copt = cmd->add_option("--corpus", corpus_path, "Corpus manifest.json");
    auto* nopt = cmd->add_option("--num-objects", num_objects, "Object count (counts mode)");
    cmd->add_option("--num-images", num_images, "Image count (counts mode)");
    cmd->add_option("--count-ge1", count_ge1, "Objects with >= 1 neighbor (counts mode)");
    cmd->add_option("--count-ge3", count_ge3, "Objects with >= 3 neighbors (counts mode)");
    gopt->needs(copt);
    copt->needs(gopt);
    nopt->excludes(gopt);
    actions.emplace_back(cmd, [&, gopt, nopt] {
      RecurrenceStats st;
      if (*gopt) {
        auto lc = load(corpus_path);
        st = degree_stats(read_graph(graph_path), lc.corpus.records);
      } else if (*nopt) {
        st = stats_from_counts(num_images, num_objects, count_ge1, count_ge3);
      } else {
        throw ValidationError("analyze stats needs --graph and --corpus, or --num-objects");
      }
      const std::string text = stats_report_json(st);
      write_pair(g, "stats", text, stats_report_csv(st));
      std::cout << text;
    });
  }

  // -------------------------------------------------------------- dataset
  auto* dataset_cmd = app.add_subcommand("dataset", "Assemble training examples");
  dataset_cmd->require_subcommand(1);
  std::string task_name = "insertion";
  std::string sidecar_dir, image_root;
  bool render_grids = false, strict = false;
  {
    auto* cmd = dataset_cmd->add_subcommand(
        "emit", "Write examples.jsonl and training_manifest.json from a graph");
    cmd->add_option("--task", task_name, "insertion or subject")
        ->check(CLI::IsMember({"insertion", "subject", "subject_gen"}))
        ->capture_default_str();
    cmd->add_option("--graph", graph_path, "neighbors.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    cmd->add_option("--sidecars", sidecar_dir,
                    "Directory with backgrounds/<id>.png and captions/<id>.txt")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--image-root", image_root,
                    "Root for record image paths (default: manifest directory)");
    cmd->add_flag("--grids", render_grids, "Render 2x2 conditioning grids as PNG");
    cmd->add_flag("--strict", strict, "Fail on missing or invalid scene sidecars");
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      DatasetOptions o;
      o.task = parse_task(task_name);
      o.out_dir = g.out;
      if (!sidecar_dir.empty()) o.sidecar_dir = sidecar_dir;
      o.image_root = image_root.empty() ? fs::path(corpus_path).parent_path() : fs::path(image_root);
      o.render_grids = render_grids;
      o.strict_sidecars = strict;
      o.seed = g.seed;
      o.threads = g.threads;
      fs::create_directories(o.out_dir);
      const auto r = emit_dataset(read_graph(graph_path), lc.corpus.records, o);
      spdlog::info("emitted {} examples, skipped {} objects with < 3 neighbors, {} without a "
                   "complete scene, {} grids",
                   r.assembly.emitted, r.assembly.skipped, r.missing_scene, r.grids_written);
    });
  }
  {
    auto* cmd = dataset_cmd->add_subcommand("manifest",
                                            "Write the training manifest with task defaults");
    cmd->add_option("--task", task_name, "insertion or subject")
        ->check(CLI::IsMember({"insertion", "subject", "subject_gen"}))
        ->capture_default_str();
    add_band_options(cmd, bo);
    actions.emplace_back(cmd, [&] {
      const auto m = default_manifest(parse_task(task_name), band_of(bo), bo.k_max, g.seed);
      const fs::path p = out_path(g, "training_manifest.json");
      emit_manifest(p, m);
      spdlog::info("wrote {}", p.string());
    });
  }

  // ----------------------------------------------------------------- eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation protocol");
  eval_cmd->require_subcommand(1);
  std::string embeddings_path, reference_path, triplets_path;
  {
    auto* cmd = eval_cmd->add_subcommand(
        "identity", "Identity score of generated crops against reference crops");
    cmd->add_option("--embeddings", embeddings_path, "Generated-crop embeddings (OMFV + .ids)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--reference", reference_path, "Reference-crop embeddings (OMFV + .ids)")
        ->required()
        ->check(CLI::ExistingFile);
    actions.emplace_back(cmd, [&] {
      const auto gen = load_embedding_table(embeddings_path);
      const auto ref = load_embedding_table(reference_path);
      json scores = json::array();
      double sum = 0.0;
      std::uint64_t count = 0, failures = 0;
      for (const auto& key : ref.keys()) {
        const auto e = gen.find(key);
        json row{{"key", key}};
        if (e.empty()) {
          row["identity"] = nullptr;
          ++failures;
        } else {
          const auto s = identity_score(e, ref.at(key), key, key);
          row["identity"] = *s.value;
          sum += *s.value;
          ++count;
        }
        scores.push_back(std::move(row));
      }
      json out;
      out["kind"] = "identity_scores";
      out["mean"] = count ? json(sum / static_cast<double>(count)) : json(nullptr);
      out["count"] = count;
      out["failures"] = failures;
      out["scores"] = std::move(scores);
      write_file_atomic(out_path(g, "identity.json"), out.dump(2) + "\n");
      spdlog::info("identity: {} scored, {} missing generated crops", count, failures);
    });
  }
  {
    auto* cmd = eval_cmd->add_subcommand(
        "agreement", "How often a metric agrees with user preferences");
    cmd->add_option("--embeddings", embeddings_path, "Embedding table (OMFV + .ids)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--triplets", triplets_path,
                    "JSONL {\"ref\", \"gen1\", \"gen2\", \"choice\"}")
        ->required()
        ->check(CLI::ExistingFile);
    actions.emplace_back(cmd, [&] {
      const auto table = load_embedding_table(embeddings_path);
      const auto triplets = read_triplets(triplets_path, table);
      json out;
      out["kind"] = "metric_agreement";
      out["accuracy"] = metric_agreement(triplets);
      out["triplets"] = triplets.size();
      write_file_atomic(out_path(g, "agreement.json"), out.dump(2) + "\n");
      std::cout << out.dump() << std::endl;
    });
  }
  std::string benchmark_path, outputs_dir, identity_spec;
  std::vector<std::string> composition_specs;
  {
    auto* cmd = eval_cmd->add_subcommand("benchmark", "Score model outputs on the quadruplet benchmark");
    cmd->add_option("--benchmark", benchmark_path, "benchmark.jsonl quadruplets")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--outputs", outputs_dir, "Directory with <sample_id>.png outputs")
        ->required()
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--embeddings", composition_specs,
                    "Composition metric as NAME=GENERATED,GROUND_TRUTH (repeatable)")
        ->required();
    cmd->add_option("--identity", identity_spec,
                    "Identity crops as GENERATED,REFERENCES embedding tables");
    actions.emplace_back(cmd, [&] {
      const auto samples = expand_quadruplets(read_benchmark(benchmark_path));
      std::vector<CompositionMetric> metrics;
      for (const auto& spec : composition_specs) {
        const auto eq = spec.find('=');
        const auto paths = split(eq == std::string::npos ? spec : spec.substr(eq + 1), ',');
        if (eq == std::string::npos || eq == 0 || paths.size() != 2) {
          throw ValidationError("--embeddings expects NAME=GENERATED,GROUND_TRUTH, got " + spec);
        }
        metrics.push_back({spec.substr(0, eq), load_embedding_table(paths[0]),
                           load_embedding_table(paths[1])});
      }
      std::optional<IdentityMetric> identity;
      if (!identity_spec.empty()) {
        const auto paths = split(identity_spec, ',');
        if (paths.size() != 2) throw ValidationError("--identity expects GENERATED,REFERENCES");
        identity = IdentityMetric{load_embedding_table(paths[0]), load_embedding_table(paths[1])};
      }
      const auto report = benchmark_report(samples, outputs_dir, metrics,
                                           identity ? &*identity : nullptr, g.threads);
      write_pair(g, "benchmark_report", encode_benchmark_json(report),
                 encode_benchmark_csv(report));
      spdlog::info("benchmark: {} samples", report.samples.size());
    });
  }

  // ---------------------------------------------------------------- label
  auto* label_cmd = app.add_subcommand("label", "Threshold-calibration labeling service");
  label_cmd->require_subcommand(1);
  LabelServerOptions server_opts;
  std::string sessions_dir, ui_dir;
  bool create_session_flag = false;
  SampleSpec sample;
  {
    auto* cmd = label_cmd->add_subcommand("serve", "Serve the labeling UI and HTTP API");
    cmd->add_option("--graph", graph_path, "neighbors.jsonl")->required()->check(CLI::ExistingFile);
    cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
    cmd->add_option("--host", server_opts.host, "Bind address")->capture_default_str();
    cmd->add_option("--port", server_opts.port, "Port (0 picks a free one)")->capture_default_str();
    cmd->add_option("--sessions", sessions_dir, "Session directory (default <out>/label_sessions)");
    cmd->add_option("--ui-dir", ui_dir, "Static UI directory (default: built-in page)")
        ->check(CLI::ExistingDirectory);
    cmd->add_option("--image-root", image_root,
                    "Root for record image paths (default: manifest directory)");
    cmd->add_flag("--create", create_session_flag, "Create a session if none exists");
    cmd->add_option("--n", sample.n, "Pairs sampled by --create")->capture_default_str();
    cmd->add_option("--range-lo", sample.lo, "Lowest similarity sampled")->capture_default_str();
    cmd->add_option("--range-hi", sample.hi, "Highest similarity sampled")->capture_default_str();
    actions.emplace_back(cmd, [&] {
      auto lc = load(corpus_path);
      const KnnGraph graph = read_graph(graph_path);
      SessionStore store(sessions_dir.empty() ? fs::path(g.out) / "label_sessions"
                                              : fs::path(sessions_dir));
      if (create_session_flag && store.list().empty()) {
        sample.seed = g.seed;
        const auto id = store.create(graph, sample);
        spdlog::info("created session {} with {} pairs", id, sample.n);
      }
      if (!ui_dir.empty()) server_opts.ui_dir = ui_dir;
      server_opts.image_root =
          image_root.empty() ? fs::path(corpus_path).parent_path() : fs::path(image_root);
      LabelServer server(store, &graph, lc.corpus.records, server_opts);
      const int port = server.bind();
      spdlog::info("serving on http://{}:{}/ ({} sessions)", server_opts.host, port,
                   store.list().size());
      std::atomic<bool> done{false};
      std::thread watcher([&] {
        while (!done.load()) {
          if (abort_flag().load()) {
            server.stop();
            break;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
      });
      server.serve();
      done.store(true);
      watcher.join();
      check_abort();
    });
  }

  // ------------------------------------------------------------- pipeline
  bool no_cache = false;
  auto* pipeline_cmd = app.add_subcommand(
      "pipeline_all", "Run index, graph, stats and dataset stages with caching");
  pipeline_cmd->alias("pipeline");
  pipeline_cmd->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
  pipeline_cmd->add_option("--task", task_name, "insertion or subject")
      ->check(CLI::IsMember({"insertion", "subject", "subject_gen"}))
      ->capture_default_str();
  pipeline_cmd->add_option("--sidecars", sidecar_dir,
                           "Scene sidecar directory (default <manifest dir>/sidecars)")
      ->check(CLI::ExistingDirectory);
  pipeline_cmd->add_option("--image-root", image_root,
                           "Root for record image paths (default: manifest directory)");
  pipeline_cmd->add_flag("--grids", render_grids, "Render 2x2 conditioning grids as PNG");
  pipeline_cmd->add_flag("--strict", strict, "Fail on missing or invalid scene sidecars");
  pipeline_cmd->add_flag("--no-cache", no_cache, "Run every stage even if inputs are unchanged");
  add_band_options(pipeline_cmd, bo);
  add_index_options(pipeline_cmd, io, false);
  actions.emplace_back(pipeline_cmd, [&] {
    PipelineConfig c;
    c.manifest = corpus_path;
    c.out_dir = g.out;
    c.band = band_of(bo);
    c.k_max = bo.k_max;
    c.index = index_config(io, g);
    c.task = parse_task(task_name);
    c.seed = g.seed;
    if (!sidecar_dir.empty()) c.sidecar_dir = sidecar_dir;
    if (!image_root.empty()) c.image_root = image_root;
    c.render_grids = render_grids;
    c.strict_sidecars = strict;
    c.use_cache = !no_cache;
    c.threads = g.threads;
    spdlog::info("pipeline seed {}", g.seed);
    const auto r = pipeline_all(c, [](const StageReport& s) {
      spdlog::info("stage {}: {}", s.name, s.cached ? "cached" : "done");
    });
    json out;
    json stages = json::array();
    for (const auto& s : r.stages) stages.push_back({{"name", s.name}, {"cached", s.cached}});
    out["stages"] = std::move(stages);
    out["examples"] = r.examples;
    out["skipped"] = r.skipped;
    out["missing_scene"] = r.missing_scene;
    out["num_objects"] = r.stats.num_objects;
    out["pct_ge1_text"] = format_percent(r.stats.count_ge1, r.stats.num_objects);
    out["pct_ge3_text"] = format_percent(r.stats.count_ge3, r.stats.num_objects);
    std::cout << out.dump() << std::endl;
  });

  // ---------------------------------------------------------------- synth
  std::string synth_kind = "fixture";
  FixtureSpec fixture;
  PlantedGroupsSpec groups_spec;
  PartnerPairsSpec pairs_spec;
  bool no_images = false, no_sidecars = false;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus with planted recurrences");
  synth_cmd->add_option("--kind", synth_kind, "fixture (with images), groups, or pairs")
      ->check(CLI::IsMember({"fixture", "groups", "pairs"}))
      ->capture_default_str();
  synth_cmd->add_option("--groups", groups_spec.groups, "Planted groups")->capture_default_str();
  synth_cmd->add_option("--per-group", groups_spec.per_group, "Objects per group")
      ->capture_default_str();
  synth_cmd->add_option("--dim", groups_spec.dim, "Feature dimension")->capture_default_str();
  synth_cmd->add_option("--in-band", groups_spec.in_band_fraction,
                        "Fraction of groups with in-band similarities")
      ->capture_default_str();
  synth_cmd->add_option("--count", pairs_spec.count, "Objects (pairs kind)")->capture_default_str();
  synth_cmd->add_option("--paired", pairs_spec.paired_fraction,
                        "Fraction of objects with a partner (pairs kind)")
      ->capture_default_str();
  synth_cmd->add_option("--low-confidence", fixture.low_confidence,
                        "Objects below the detection cutoff (fixture kind)")
      ->capture_default_str();
  synth_cmd->add_flag("--no-images", no_images, "Skip images (fixture kind)");
  synth_cmd->add_flag("--no-sidecars", no_sidecars, "Skip scene sidecars (fixture kind)");
  auto* groups_opt = synth_cmd->get_option("--groups");
  auto* dim_opt = synth_cmd->get_option("--dim");
  auto* per_group_opt = synth_cmd->get_option("--per-group");
  auto* in_band_opt = synth_cmd->get_option("--in-band");
  actions.emplace_back(synth_cmd, [&, groups_opt, dim_opt, per_group_opt, in_band_opt] {
    const fs::path dir = g.out;
    if (synth_kind == "fixture") {
      if (*groups_opt) fixture.groups = groups_spec.groups;
      if (*per_group_opt) fixture.per_group = groups_spec.per_group;
      if (*dim_opt) fixture.dim = groups_spec.dim;
      if (*in_band_opt) fixture.in_band_fraction = groups_spec.in_band_fraction;
      fixture.images = !no_images;
      fixture.sidecars = !no_sidecars;
      fixture.seed = g.seed;
      const auto info = write_fixture_corpus(dir, fixture);
      spdlog::info("wrote fixture corpus {} ({} objects, {} expected examples)",
                   info.manifest.string(), info.objects, info.in_band_objects);
      return;
    }
    PlantedCorpus pc;
    if (synth_kind == "groups") {
      groups_spec.seed = g.seed;
      pc = planted_groups(groups_spec);
    } else {
      pairs_spec.seed = g.seed;
      if (*dim_opt) pairs_spec.dim = groups_spec.dim;
      pc = partner_pairs(pairs_spec);
    }
    fs::create_directories(dir);
    write_objects(dir / "objects.jsonl", pc.records);
    write_features(dir / "features.bin", pc.features);
    CorpusManifest m;
    m.objects_path = dir / "objects.jsonl";
    m.features_path = dir / "features.bin";
    m.dim = pc.features.dim();
    m.count = pc.records.size();
    write_manifest(dir / "manifest.json", m);
    spdlog::info("wrote {} corpus with {} objects to {}", synth_kind, pc.records.size(),
                 dir.string());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  configure_logging(g.log_level);
  if (g.threads > 0) set_default_threads(g.threads);
  abort_flag().store(false);
  const auto previous = std::signal(SIGINT, on_sigint);

  int code = 0;
  try {
    bool ran = false;
    for (auto& [cmd, action] : actions) {
      if (cmd->parsed() && cmd->get_subcommands().empty()) {
        action();
        ran = true;
        break;
      }
    }
    if (!ran) throw ValidationError("no command given");
  } catch (const AbortedError&) {
    spdlog::warn("interrupted; partial outputs removed");
    code = 130;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    code = 1;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    code = 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    code = 2;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    code = 3;
  }
  std::signal(SIGINT, previous);
  return code;
}

}  // namespace forge::cli
