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


#include "forge/label_server.hpp"

#include <charconv>
#include <unordered_map>

#include <httplib.h>

#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/io.hpp"
#include "json_io.hpp"

namespace forge {

namespace fs = std::filesystem;
using detail::json;
using detail::ordered_json;

namespace {

const char* const kIndexHtml = R"HTML(<!doctype html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>Pair labeling</title>
<style>
  body { font-family: sans-serif; margin: 1.5rem; color: #222; }
  header { display: flex; gap: 2rem; align-items: baseline; }
  #pair { display: flex; gap: 1rem; margin: 1rem 0; }
  #pair img { width: 256px; height: 256px; object-fit: contain; background: #eee; }
  button { font-size: 1rem; margin-right: .5rem; }
  #curve { border: 1px solid #ccc; }
  .muted { color: #777; }
</style>
</head>
<body>
<header>
  <h2 id="sim">-</h2>
  <span id="progress" class="muted"></span>
  <span id="status" class="muted"></span>
</header>
<div id="pair">
  <img id="crop-a" alt="object a">
  <img id="crop-b" alt="object b">
</div>
<div>
  <button id="yes">Same object (T)</button>
  <button id="no">Different (F)</button>
</div>
<h3>Precision vs threshold</h3>
<canvas id="curve" width="640" height="240"></canvas>
<div>
  <input id="slider" type="range" min="0.85" max="1" step="0.005" value="0.93">
  <span id="readout"></span>
  <button id="commit">Commit threshold</button>
  <a id="export" href="#">Export labels</a>
</div>
<script>
const params = new URLSearchParams(location.search);
let session = params.get('session');
let card = null, curve = [], busy = false;
const $ = (id) => document.getElementById(id);

async function api(path, opts) {
  const r = await fetch(path, opts);
  const body = await r.json().catch(() => ({}));
  if (!r.ok) throw Object.assign(new Error(body.error || r.statusText), {status: r.status});
  return body;
}

async function refresh() {
  const stats = await api(`/api/session/${session}/stats`);
  $('progress').textContent = `${stats.labeled}/${stats.total}`;
  card = await api(`/api/session/${session}/next`);
  if (card.done) {
    $('sim').textContent = 'All pairs labeled';
    $('crop-a').removeAttribute('src');
    $('crop-b').removeAttribute('src');
  } else {
    $('sim').textContent = card.similarity.toFixed(3);
    $('crop-a').src = card.crop_a;
    $('crop-b').src = card.crop_b;
  }
  try {
    curve = (await api(`/api/session/${session}/precision?step=0.005`)).points;
  } catch (e) { curve = []; }
  draw();
}

function draw() {
  const c = $('curve'), g = c.getContext('2d');
  g.clearRect(0, 0, c.width, c.height);
  const x = (t) => (t - 0.85) / 0.15 * (c.width - 20) + 10;
  const y = (p) => c.height - 10 - p * (c.height - 20);
  g.strokeStyle = '#36c';
  g.beginPath();
  let pen = false;
  for (const pt of curve) {
    if (pt.precision === null) { pen = false; continue; }
    if (pen) g.lineTo(x(pt.threshold), y(pt.precision));
    else g.moveTo(x(pt.threshold), y(pt.precision));
    pen = true;
  }
  g.stroke();
  const t = parseFloat($('slider').value);
  g.strokeStyle = '#c33';
  g.beginPath(); g.moveTo(x(t), 0); g.lineTo(x(t), c.height); g.stroke();
  const at = curve.reduce((best, pt) => Math.abs(pt.threshold - t) < Math.abs((best ? best.threshold : 9) - t) ? pt : best, null);
  $('readout').textContent = at
    ? `t=${t.toFixed(3)} precision=${at.precision === null ? 'n/a' : at.precision.toFixed(3)} support=${at.support}`
    : `t=${t.toFixed(3)}`;
}

async function submit(match) {
  if (busy || !card || card.done) return;
  busy = true;
  try {
    await api(`/api/session/${session}/label`, {method: 'POST',
      headers: {'Content-Type': 'application/json'},
      body: JSON.stringify({pair_id: card.pair_id, match})});
  } catch (e) {
    if (e.status !== 409) $('status').textContent = e.message;
  }
  busy = false;
  await refresh();
}

async function init() {
  if (!session) {
    const list = await api('/api/sessions');
    if (!list.sessions.length) { $('sim').textContent = 'No sessions'; return; }
    session = list.sessions[0];
  }
  $('export').href = `/api/session/${session}/labels`;
  await refresh();
}

document.addEventListener('keydown', (e) => {
  if (e.key === 't' || e.key === 'T') submit(true);
  if (e.key === 'f' || e.key === 'F') submit(false);
});
$('yes').onclick = () => submit(true);
$('no').onclick = () => submit(false);
$('slider').oninput = draw;
$('commit').onclick = async () => {
  const value = parseFloat($('slider').value);
  await api(`/api/session/${session}/threshold`, {method: 'POST',
    headers: {'Content-Type': 'application/json'}, body: JSON.stringify({value})});
  $('status').textContent = `threshold ${value.toFixed(3)} committed`;
};
init().catch((e) => { $('status').textContent = e.message; });
</script>
</body>
</html>
)HTML";

void send_json(httplib::Response& res, const ordered_json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, ordered_json{{"error", message}}, status);
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const ConflictError& e) {
    send_error(res, 409, e.what());
  } catch (const ValidationError& e) {
    send_error(res, 400, e.what());
  } catch (const FormatError& e) {
    send_error(res, 400, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

json parse_body(const httplib::Request& req) {
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("malformed JSON body: ") + e.what());
  }
}

double query_double(const httplib::Request& req, const char* key, double fallback) {
  if (!req.has_param(key)) return fallback;
  const std::string v = req.get_param_value(key);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ValidationError(std::string("query parameter ") + key + " is not a number");
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ValidationError(std::string(what) + " must be a non-negative integer");
  }
  return out;
}

ordered_json stats_json(const std::string& id, const SessionStats& s) {
  ordered_json j;
  j["session_id"] = id;
  j["total"] = s.total;
  j["labeled"] = s.labeled;
  j["pending"] = s.pending;
  j["matches"] = s.matches;
  j["chosen_threshold"] =
      s.chosen_threshold ? ordered_json(*s.chosen_threshold) : ordered_json(nullptr);
  return j;
}

}  // namespace

std::string render_crop(const ObjectRecord& record, const fs::path& image_root) {
  const fs::path path = image_root / record.image;
  if (!fs::exists(path)) throw NotFoundError("image not found: " + path.string());
  return encode_png(crop_to_bbox(read_image(path), record.bbox));
}

const std::string& builtin_ui_page() {
  static const std::string page(kIndexHtml);
  return page;
}

struct LabelServer::Impl {
  SessionStore& store;
  const KnnGraph* graph;
  std::unordered_map<ObjectId, ObjectRecord> records;
  LabelServerOptions options;
  httplib::Server server;
  int bound_port = -1;

  Impl(SessionStore& s, const KnnGraph* g, std::span<const ObjectRecord> recs,
       LabelServerOptions opts)
      : store(s), graph(g), options(std::move(opts)) {
    for (const auto& r : recs) records.emplace(r.id, r);
    routes();
  }

  std::string crop_url(const std::string& id, std::uint64_t pair_id, char side) const {
    return "/crops/" + std::to_string(pair_id) + "/" + side + ".png?session=" + id;
  }

  void routes() {
    auto& svr = server;

    if (options.ui_dir) {
      if (!svr.set_mount_point("/", options.ui_dir->string())) {
        throw IoError("UI directory not found: " + options.ui_dir->string());
      }
    } else {
      svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(builtin_ui_page(), "text/html; charset=utf-8");
      });
    }

    svr.Get("/api/sessions", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, ordered_json{{"sessions", store.list()}}); });
    });

    svr.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        if (!graph) throw ValidationError("server was started without a graph");
        const json body = parse_body(req);
        SampleSpec spec;
        spec.n = body.value("n", spec.n);
        spec.seed = body.value("seed", spec.seed);
        spec.lo = body.value("lo", spec.lo);
        spec.hi = body.value("hi", spec.hi);
        const std::string id = store.create(*graph, spec, body.value("id", std::string()));
        send_json(res, stats_json(id, store.stats(id)), 201);
      });
    });

    svr.Get("/api/session/:id", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const LabelSession s = store.snapshot(req.path_params.at("id"));
        ordered_json j = ordered_json::parse(encode_session(s));
        j["stats"] = stats_json(s.id(), s.stats());
        send_json(res, j);
      });
    });

    svr.Get("/api/session/:id/next", [this](const httplib::Request& req,
                                           httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.path_params.at("id");
        const auto p = store.next_pair(id);
        ordered_json j;
        if (!p) {
          j["done"] = true;
          j["session_id"] = id;
        } else {
          j["done"] = false;
          j["session_id"] = id;
          j["pair_id"] = p->pair_id;
          j["a"] = p->a;
          j["b"] = p->b;
          j["similarity"] = detail::float_for_json(p->similarity);
          j["crop_a"] = crop_url(id, p->pair_id, 'a');
          j["crop_b"] = crop_url(id, p->pair_id, 'b');
        }
        send_json(res, j);
      });
    });

    svr.Post("/api/session/:id/label", [this](const httplib::Request& req,
                                             httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.path_params.at("id");
        const json body = parse_body(req);
        const auto pid = body.find("pair_id");
        const auto match = body.find("match");
        if (pid == body.end() || !pid->is_number_unsigned()) {
          throw ValidationError("pair_id must be a non-negative integer");
        }
        if (match == body.end() || !match->is_boolean()) {
          throw ValidationError("match must be a boolean");
        }
        const SessionStats s = store.submit_label(id, pid->get<std::uint64_t>(),
                                                  match->get<bool>());
        ordered_json j = stats_json(id, s);
        j["ok"] = true;
        send_json(res, j);
      });
    });

    svr.Get("/api/session/:id/precision", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.path_params.at("id");
        const double step = query_double(req, "step", 0.005);
        const double lo = query_double(req, "lo", 0.85);
        const double hi = query_double(req, "hi", 1.0);
        const auto thresholds = threshold_sweep(lo, hi, step);
        const PrecisionCurve curve = store.live_precision(id, thresholds);
        ordered_json j = ordered_json::parse(precision_report_json(curve));
        j["session_id"] = id;
        j["labeled"] = store.stats(id).labeled;
        send_json(res, j);
      });
    });

    svr.Post("/api/session/:id/threshold", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.path_params.at("id");
        const json body = parse_body(req);
        const auto v = body.find("value");
        if (v == body.end() || !v->is_number()) throw ValidationError("value must be a number");
        store.set_threshold(id, v->get<double>());
        ordered_json j = stats_json(id, store.stats(id));
        j["ok"] = true;
        send_json(res, j);
      });
    });

    svr.Get("/api/session/:id/stats", [this](const httplib::Request& req,
                                            httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.path_params.at("id");
        send_json(res, stats_json(id, store.stats(id)));
      });
    });

    svr.Get("/api/session/:id/labels", [this](const httplib::Request& req,
                                             httplib::Response& res) {
      guarded(res, [&] {
        const std::string id = req.path_params.at("id");
        store.stats(id);
        res.set_header("Content-Disposition", "attachment; filename=\"labels.jsonl\"");
        res.set_content(read_file(store.labels_path(id)), "application/x-ndjson");
      });
    });

    svr.Get("/crops/:pair_id/:side", [this](const httplib::Request& req,
                                           httplib::Response& res) {
      guarded(res, [&] {
        std::string id = req.get_param_value("session");
        if (id.empty()) {
          const auto ids = store.list();
          if (ids.size() != 1) throw ValidationError("crop request needs ?session=");
          id = ids.front();
        }
        const std::string& side = req.path_params.at("side");
        if (side != "a.png" && side != "b.png") throw NotFoundError("unknown crop side");
        const SampledPair p = store.pair(id, parse_u64(req.path_params.at("pair_id"), "pair_id"));
        const ObjectId oid = side == "a.png" ? p.a : p.b;
        const auto it = records.find(oid);
        if (it == records.end()) {
          throw NotFoundError("object " + std::to_string(oid) + " not in corpus");
        }
        res.set_content(render_crop(it->second, options.image_root), "image/png");
      });
    });
  }
};

LabelServer::LabelServer(SessionStore& store, const KnnGraph* graph,
                         std::span<const ObjectRecord> records, LabelServerOptions options)
    : impl_(std::make_unique<Impl>(store, graph, records, std::move(options))) {}

LabelServer::~LabelServer() { stop(); }

int LabelServer::bind() {
  if (impl_->bound_port >= 0) return impl_->bound_port;
  if (impl_->options.port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(impl_->options.host);
  } else if (impl_->server.bind_to_port(impl_->options.host, impl_->options.port)) {
    impl_->bound_port = impl_->options.port;
  }
  if (impl_->bound_port < 0) {
    throw IoError("cannot bind " + impl_->options.host + ":" +
                  std::to_string(impl_->options.port));
  }
  return impl_->bound_port;
}

void LabelServer::serve() {
  bind();
  impl_->server.listen_after_bind();
}

void LabelServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void LabelServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace forge
