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

#include "forge/dataset_forge.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <unordered_map>

#include "forge/error.hpp"
#include "forge/io.hpp"
#include "forge/parallel.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

std::string_view to_string(Task task) {
  return task == Task::kInsertion ? "insertion" : "subject_gen";
}

Task parse_task(std::string_view s) {
  if (s == "insertion") return Task::kInsertion;
  if (s == "subject" || s == "subject_gen") return Task::kSubjectGen;
  throw ValidationError("unknown task: " + std::string(s));
}

bool SceneDescription::complete() const {
  if (kind == Task::kInsertion) {
    return background_ref.has_value() && position_mask_bbox.has_value() && !caption;
  }
  return caption.has_value() && !caption->empty() && !background_ref &&
         !position_mask_bbox;
}

// ---------------------------------------------------------------------------
// Assembly

AssemblyStats assemble_examples(const KnnGraph& graph,
                                std::span<const ObjectRecord> records, Task task,
                                const std::function<void(TrainingExample&&)>& sink) {
  std::unordered_map<ObjectId, std::size_t> by_id;
  by_id.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) by_id.emplace(records[i].id, i);

  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });

  AssemblyStats stats;
  for (std::size_t pos : order) {
    const ObjectRecord& target = records[pos];
    TrainingExample ex;
    std::size_t n = 0;
    for (const auto& nb : graph.neighbors_of(target.id)) {
      auto it = by_id.find(nb.id);
      if (it == by_id.end() || nb.id == target.id) continue;
      const ObjectRecord& ref = records[it->second];
      if (ref.image == target.image) continue;
      ex.references[n] = ref;
      ex.similarities[n] = nb.similarity;
      if (++n == kNumReferences) break;
    }
    if (n < kNumReferences) {
      ++stats.skipped;
      continue;
    }
    ex.target = target;
    ex.scene.kind = task;
    ++stats.emitted;
    sink(std::move(ex));
  }
  return stats;
}

std::vector<TrainingExample> assemble_examples(const KnnGraph& graph,
                                               std::span<const ObjectRecord> records,
                                               Task task, AssemblyStats* stats) {
  std::vector<TrainingExample> out;
  auto s = assemble_examples(graph, records, task,
                             [&](TrainingExample&& ex) { out.push_back(std::move(ex)); });
  if (stats) *stats = s;
  return out;
}

void validate_example(const TrainingExample& ex, const SimilarityBand& band) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("example for target " + std::to_string(ex.target.id) + ": " +
                          what);
  };
  for (std::size_t i = 0; i < kNumReferences; ++i) {
    const auto& r = ex.references[i];
    if (r.id == ex.target.id) fail("reference equals target");
    if (r.image == ex.target.image) fail("reference shares the target's source image");
    if (!band.contains(ex.similarities[i])) fail("reference similarity outside band");
    for (std::size_t j = 0; j < i; ++j) {
      if (ex.references[j].id == r.id) fail("duplicate reference");
    }
  }
}

TrainingExample attach_background(TrainingExample ex, const fs::path& background_file,
                                  const ImageSize& target_size,
                                  std::optional<std::string> background_ref) {
  if (ex.scene.kind != Task::kInsertion) {
    throw ValidationError("attach_background needs an insertion example");
  }
  if (!fs::exists(background_file)) {
    throw IoError("missing background file: " + background_file.string());
  }
  const ImageSize size = read_image_size(background_file);
  if (size != target_size) {
    throw ValidationError(
        "background " + background_file.string() + " is " + std::to_string(size.width) +
        "x" + std::to_string(size.height) + " but target image is " +
        std::to_string(target_size.width) + "x" + std::to_string(target_size.height));
  }
  ex.scene.background_ref = background_ref.value_or(background_file.generic_string());
  ex.scene.position_mask_bbox = ex.target.bbox;
  return ex;
}

TrainingExample attach_caption(TrainingExample ex, std::string caption) {
  if (ex.scene.kind != Task::kSubjectGen) {
    throw ValidationError("attach_caption needs a subject generation example");
  }
  if (caption.empty()) throw ValidationError("caption must not be empty");
  ex.scene.caption = std::move(caption);
  return ex;
}

// ---------------------------------------------------------------------------
// Grid

BBox GridLayout::slot(int index) {
  switch (index) {
    case kTarget: return {0, 0, kTileSize, kTileSize};
    case kRef1: return {kTileSize, 0, kTileSize, kTileSize};
    case kRef2: return {0, kTileSize, kTileSize, kTileSize};
    case kRef3: return {kTileSize, kTileSize, kTileSize, kTileSize};
    default: throw ValidationError("grid slot out of range");
  }
}

std::uint64_t LossMask::ones() const {
  return static_cast<std::uint64_t>(std::count(values.begin(), values.end(), 1));
}

LossMask make_loss_mask() {
  LossMask m;
  m.values.assign(static_cast<std::size_t>(kCanvasSize * kCanvasSize), 0);
  for (std::int64_t y = 0; y < kTileSize; ++y) {
    std::fill_n(m.values.begin() + y * kCanvasSize, kTileSize, 1);
  }
  return m;
}

Grid compose_grid(const Image& target, std::span<const Image> refs) {
  if (refs.size() != kNumReferences) {
    throw ValidationError("compose_grid needs exactly 3 reference tiles, got " +
                          std::to_string(refs.size()));
  }
  auto check = [&](const Image& t, const char* name) {
    if (t.width != kTileSize || t.height != kTileSize) {
      throw ValidationError(std::string(name) + " tile is " + std::to_string(t.width) +
                            "x" + std::to_string(t.height) + ", expected 512x512");
    }
    if (t.channels != target.channels) throw ValidationError("tile channel mismatch");
  };
  check(target, "target");
  for (const auto& r : refs) check(r, "reference");

  Grid g;
  g.canvas = Image(kCanvasSize, kCanvasSize, target.channels);
  const Image* tiles[4] = {&target, &refs[0], &refs[1], &refs[2]};
  for (int s = 0; s < 4; ++s) {
    const BBox box = GridLayout::slot(s);
    blit(*tiles[s], g.canvas, box.x, box.y);
  }
  g.mask = make_loss_mask();
  return g;
}

Image extract_slot(const Image& canvas, int slot) {
  return crop_to_bbox(canvas, GridLayout::slot(slot));
}

Plane to_plane(const Image& img) {
  Plane p{img.width, img.height, img.channels, {}};
  p.values.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) p.values[i] = img.pixels[i] / 255.0f;
  return p;
}

Plane quadrant_plane(const Plane& tile) {
  if (tile.width != kTileSize || tile.height != kTileSize) {
    throw ValidationError("quadrant_plane needs a 512x512 tile");
  }
  Plane out{kCanvasSize, kCanvasSize, tile.channels, {}};
  out.values.assign(static_cast<std::size_t>(kCanvasSize * kCanvasSize * tile.channels), 0.0f);
  const std::size_t row = static_cast<std::size_t>(kTileSize * tile.channels);
  for (std::int64_t y = 0; y < kTileSize; ++y) {
    std::copy_n(tile.values.begin() + static_cast<std::ptrdiff_t>(y * row), row,
                out.values.begin() + y * kCanvasSize * tile.channels);
  }
  return out;
}

Plane bbox_mask_plane(const BBox& box) {
  Plane out{kCanvasSize, kCanvasSize, 1, {}};
  out.values.assign(static_cast<std::size_t>(kCanvasSize * kCanvasSize), 0.0f);
  const std::int64_t x0 = std::clamp<std::int64_t>(box.x, 0, kTileSize);
  const std::int64_t y0 = std::clamp<std::int64_t>(box.y, 0, kTileSize);
  const std::int64_t x1 = std::clamp<std::int64_t>(box.x + box.w, 0, kTileSize);
  const std::int64_t y1 = std::clamp<std::int64_t>(box.y + box.h, 0, kTileSize);
  for (std::int64_t y = y0; y < y1; ++y) {
    for (std::int64_t x = x0; x < x1; ++x) out.at(x, y, 0) = 1.0f;
  }
  return out;
}

ChannelStack insertion_channels(const Plane& noisy, const Plane& background,
                                const Plane& mask) {
  const Plane* planes[3] = {&noisy, &background, &mask};
  const char* names[3] = {"noisy", "background", "mask"};
  for (int i = 0; i < 3; ++i) {
    const Plane& p = *planes[i];
    if (p.width != kCanvasSize || p.height != kCanvasSize) {
      throw ValidationError(std::string(names[i]) + " plane must be 1024x1024");
    }
    if (p.values.size() != static_cast<std::size_t>(p.width * p.height * p.channels)) {
      throw ValidationError(std::string(names[i]) + " plane has a bad payload size");
    }
  }
  if (mask.channels != 1) throw ValidationError("mask plane must have one channel");

  for (int i = 1; i < 3; ++i) {
    const Plane& p = *planes[i];
    for (std::int64_t y = 0; y < kCanvasSize; ++y) {
      for (std::int64_t x = (y < kTileSize ? kTileSize : 0); x < kCanvasSize; ++x) {
        for (int c = 0; c < p.channels; ++c) {
          if (p.at(x, y, c) != 0.0f) {
            throw ValidationError(std::string(names[i]) + " plane has a nonzero value at (" +
                                  std::to_string(x) + ", " + std::to_string(y) +
                                  ") outside the target quadrant");
          }
        }
      }
    }
  }

  ChannelStack s;
  s.width = kCanvasSize;
  s.height = kCanvasSize;
  s.channels = noisy.channels + background.channels + mask.channels;
  int begin = 0;
  for (int i = 0; i < 3; ++i) {
    s.order.emplace_back(names[i]);
    s.channel_ranges.emplace_back(begin, begin + planes[i]->channels);
    begin += planes[i]->channels;
  }
  s.values.resize(static_cast<std::size_t>(s.width * s.height * s.channels));
  std::size_t o = 0;
  for (std::int64_t y = 0; y < kCanvasSize; ++y) {
    for (std::int64_t x = 0; x < kCanvasSize; ++x) {
      for (const Plane* p : planes) {
        for (int c = 0; c < p->channels; ++c) s.values[o++] = p->at(x, y, c);
      }
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Manifest

bool operator==(const TrainingManifest& a, const TrainingManifest& b) {
  return a.task == b.task && a.steps == b.steps && a.batch_size == b.batch_size &&
         a.ref_dropout == b.ref_dropout && a.text_dropout == b.text_dropout &&
         a.gamma_image == b.gamma_image && a.gamma_text == b.gamma_text &&
         a.band.lo == b.band.lo && a.band.hi == b.band.hi && a.k_max == b.k_max &&
         a.seed == b.seed && a.tile_size == b.tile_size &&
         a.canvas_size == b.canvas_size;
}

TrainingManifest default_manifest(Task task, const SimilarityBand& band,
                                  std::uint32_t k_max, std::uint64_t seed) {
  TrainingManifest m;
  m.task = task;
  m.band = band;
  m.k_max = k_max;
  m.seed = seed;
  if (task == Task::kInsertion) {
    m.gamma_image = 2.0;
  } else {
    m.gamma_image = 1.5;
    m.gamma_text = 7.5;
    m.text_dropout = 0.10;
  }
  return m;
}

std::string encode_manifest(const TrainingManifest& m) {
  ordered_json j;
  j["task"] = to_string(m.task);
  j["steps"] = m.steps;
  j["batch_size"] = m.batch_size;
  j["ref_dropout"] = m.ref_dropout;
  if (m.text_dropout) j["text_dropout"] = *m.text_dropout;
  j["gamma_image"] = m.gamma_image;
  if (m.gamma_text) j["gamma_text"] = *m.gamma_text;
  j["band"] = {{"lo", m.band.lo}, {"hi", m.band.hi}};
  j["k_max"] = m.k_max;
  j["seed"] = m.seed;
  ordered_json grid;
  grid["tile"] = m.tile_size;
  grid["canvas"] = m.canvas_size;
  grid["layout"] = {"target", "ref1", "ref2", "ref3"};
  j["grid"] = std::move(grid);
  return j.dump(2) + "\n";
}

TrainingManifest parse_manifest(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed training manifest: ") + e.what());
  }
  TrainingManifest m;
  m.task = parse_task(detail::get_string(j, "task", 0));
  m.steps = detail::get_u64(j, "steps", 0);
  m.batch_size = static_cast<std::uint32_t>(detail::get_u64(j, "batch_size", 0));
  m.ref_dropout = detail::get_number(j, "ref_dropout", 0);
  if (j.contains("text_dropout")) m.text_dropout = detail::get_number(j, "text_dropout", 0);
  m.gamma_image = detail::get_number(j, "gamma_image", 0);
  if (j.contains("gamma_text")) m.gamma_text = detail::get_number(j, "gamma_text", 0);
  const json& band = detail::get_field(j, "band", 0);
  m.band.lo = detail::get_number(band, "lo", 0);
  m.band.hi = detail::get_number(band, "hi", 0);
  m.k_max = static_cast<std::uint32_t>(detail::get_u64(j, "k_max", 0));
  m.seed = detail::get_u64(j, "seed", 0);
  const json& grid = detail::get_field(j, "grid", 0);
  m.tile_size = static_cast<std::int64_t>(detail::get_u64(grid, "tile", 0));
  m.canvas_size = static_cast<std::int64_t>(detail::get_u64(grid, "canvas", 0));
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(m.ref_dropout) || (m.text_dropout && !rate_ok(*m.text_dropout))) {
    throw ValidationError("dropout rates must lie in [0, 1]");
  }
  if (m.text_dropout && m.ref_dropout + *m.text_dropout > 1.0) {
    throw ValidationError("dropout buckets must be disjoint (rates sum > 1)");
  }
  return m;
}

void emit_manifest(const fs::path& path, const TrainingManifest& m) {
  write_file_atomic(path, encode_manifest(m));
}

// ---------------------------------------------------------------------------
// examples.jsonl

std::string encode_example(const ExampleRow& row) {
  ordered_json j;
  j["target"] = row.target;
  j["refs"] = row.refs;
  ordered_json sims = ordered_json::array();
  for (float s : row.sims) sims.push_back(detail::float_for_json(s));
  j["sims"] = std::move(sims);
  ordered_json scene;
  scene["kind"] = to_string(row.scene.kind);
  if (row.scene.kind == Task::kInsertion) {
    scene["background"] = row.scene.background_ref ? json(*row.scene.background_ref)
                                                   : json(nullptr);
    scene["bbox"] = row.scene.position_mask_bbox
                        ? detail::bbox_to_json(*row.scene.position_mask_bbox)
                        : json(nullptr);
  } else {
    scene["caption"] = row.scene.caption ? json(*row.scene.caption) : json(nullptr);
  }
  j["scene"] = std::move(scene);
  j["grid"] = row.grid ? json(*row.grid) : json(nullptr);
  j["mask_bbox"] = row.mask_bbox ? detail::bbox_to_json(*row.mask_bbox) : json(nullptr);
  return j.dump();
}

ExampleRow decode_example(std::string_view line, std::size_t line_no) {
  json j = detail::parse_json_line(line, line_no);
  ExampleRow row;
  row.target = detail::get_u64(j, "target", line_no);
  const json& refs = detail::get_field(j, "refs", line_no);
  const json& sims = detail::get_field(j, "sims", line_no);
  if (!refs.is_array() || refs.size() != kNumReferences || !sims.is_array() ||
      sims.size() != kNumReferences) {
    throw FormatError("refs and sims must hold exactly 3 entries", line_no);
  }
  for (std::size_t i = 0; i < kNumReferences; ++i) {
    if (!refs[i].is_number_unsigned() || !sims[i].is_number()) {
      throw FormatError("bad refs/sims entry", line_no);
    }
    row.refs[i] = refs[i].get<ObjectId>();
    row.sims[i] = static_cast<float>(sims[i].get<double>());
  }
  const json& scene = detail::get_field(j, "scene", line_no);
  row.scene.kind = parse_task(detail::get_string(scene, "kind", line_no));
  if (row.scene.kind == Task::kInsertion) {
    if (auto it = scene.find("background"); it != scene.end() && it->is_string()) {
      row.scene.background_ref = it->get<std::string>();
    }
    if (auto it = scene.find("bbox"); it != scene.end() && !it->is_null()) {
      row.scene.position_mask_bbox = detail::bbox_from_json(*it, line_no);
    }
  } else if (auto it = scene.find("caption"); it != scene.end() && it->is_string()) {
    row.scene.caption = it->get<std::string>();
  }
  if (auto it = j.find("grid"); it != j.end() && it->is_string()) {
    row.grid = it->get<std::string>();
  }
  if (auto it = j.find("mask_bbox"); it != j.end() && !it->is_null()) {
    row.mask_bbox = detail::bbox_from_json(*it, line_no);
  }
  return row;
}

std::vector<ExampleRow> read_examples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open examples file: " + path.string());
  std::vector<ExampleRow> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty()) out.push_back(decode_example(line, n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::optional<ImageSize> target_size(const ObjectRecord& rec, const fs::path& image_root) {
  if (rec.image_size) return rec.image_size;
  const fs::path p = image_root / rec.image;
  if (fs::exists(p)) return read_image_size(p);
  return std::nullopt;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

Image render_grid(const TrainingExample& ex, const fs::path& image_root) {
  Image target = letterbox(read_image(image_root / ex.target.image), kTileSize);
  std::vector<Image> refs;
  refs.reserve(kNumReferences);
  for (const auto& r : ex.references) {
    Image src = read_image(image_root / r.image);
    refs.push_back(letterbox(crop_to_bbox(src, r.bbox), kTileSize));
  }
  return compose_grid(target, refs).canvas;
}

}  // namespace

DatasetResult emit_dataset(const KnnGraph& graph, std::span<const ObjectRecord> records,
                           const DatasetOptions& options) {
  DatasetResult result;
  std::vector<TrainingExample> examples =
      assemble_examples(graph, records, options.task, &result.assembly);

  std::vector<std::string> lines(examples.size());
  std::atomic<std::uint64_t> missing{0};
  std::atomic<std::uint64_t> grids{0};
  if (options.render_grids) fs::create_directories(options.out_dir / "grids");

  parallel_for(examples.size(), options.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      check_abort();
      TrainingExample& ex = examples[i];
      validate_example(ex, graph.band);
      const auto tsize = target_size(ex.target, options.image_root);
      const std::string id = std::to_string(ex.target.id);

      if (options.sidecar_dir) {
        try {
          if (options.task == Task::kInsertion) {
            const std::string ref = "backgrounds/" + id + ".png";
            const fs::path file = *options.sidecar_dir / ref;
            if (!tsize) {
              throw IoError("size of target image unknown for object " + id);
            }
            ex = attach_background(std::move(ex), file, *tsize, ref);
          } else {
            const fs::path file = *options.sidecar_dir / ("captions/" + id + ".txt");
            if (!fs::exists(file)) throw IoError("missing caption file: " + file.string());
            ex = attach_caption(std::move(ex), trim(read_file(file)));
          }
        } catch (const Error&) {
          if (options.strict_sidecars) throw;
        }
      }
      if (!ex.scene.complete()) {
        if (options.strict_sidecars) {
          throw ValidationError("incomplete scene description for object " + id);
        }
        ++missing;
      }

      ExampleRow row;
      row.target = ex.target.id;
      for (std::size_t r = 0; r < kNumReferences; ++r) {
        row.refs[r] = ex.references[r].id;
        row.sims[r] = ex.similarities[r];
      }
      row.scene = ex.scene;
      if (tsize) {
        LetterboxTransform t;
        const std::int64_t square = std::max(tsize->width, tsize->height);
        t.scale = static_cast<double>(kTileSize) / static_cast<double>(square);
        t.pad_x = (square - tsize->width) / 2;
        t.pad_y = (square - tsize->height) / 2;
        row.mask_bbox = t.map(ex.target.bbox);
      }
      if (options.render_grids) {
        const std::string rel = "grids/" + id + ".png";
        write_png(options.out_dir / rel, render_grid(ex, options.image_root));
        row.grid = rel;
        ++grids;
      }
      lines[i] = encode_example(row);
    }
  });

  AtomicFileWriter w(options.out_dir / "examples.jsonl", true);
  for (const auto& l : lines) w.stream() << l << '\n';
  w.commit();
  emit_manifest(options.out_dir / "training_manifest.json",
                default_manifest(options.task, graph.band, graph.k_max, options.seed));

  result.missing_scene = missing.load();
  result.grids_written = grids.load();
  return result;
}

}  // namespace forge
