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


#include <memory>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "forge/error.hpp"
#include "forge/image.hpp"
#include "forge/io.hpp"
#include "forge/label_server.hpp"
#include "forge/synth.hpp"
#include "oracles.hpp"

namespace forge {
namespace {

using json = nlohmann::json;
using testing::TempDir;

class LabelServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    FixtureSpec spec;
    spec.sidecars = false;
    const auto info = write_fixture_corpus(dir_ / "corpus", spec);
    corpus_ = load_corpus(info.manifest);
    auto idx = build_exact(std::make_shared<const FeatureMatrix>(corpus_.features));
    graph_ = build_graph(*idx, corpus_.records, GraphOptions{});
    store_ = std::make_unique<SessionStore>(dir_ / "sessions");
    start(std::nullopt);
  }

  void start(std::optional<std::filesystem::path> ui_dir) {
    LabelServerOptions o;
    o.port = 0;
    o.image_root = dir_ / "corpus";
    o.ui_dir = ui_dir;
    server_ = std::make_unique<LabelServer>(*store_, &graph_, corpus_.records, o);
    port_ = server_->bind();
    thread_ = std::thread([this] { server_->serve(); });
    server_->wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
  }

  void TearDown() override { stop(); }

  void stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    server_.reset();
  }

  json get_json(const std::string& path, int expect = 200) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << ": " << r->body;
    return json::parse(r->body);
  }

  json post_json(const std::string& path, const json& body, int expect = 200) {
    auto r = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << ": " << r->body;
    return json::parse(r->body);
  }

  std::string create(std::uint64_t n) {
    const auto j = post_json("/api/session", {{"n", n}, {"seed", 3}}, 201);
    return j.at("session_id").get<std::string>();
  }

  TempDir dir_;
  Corpus corpus_;
  KnnGraph graph_;
  std::unique_ptr<SessionStore> store_;
  std::unique_ptr<LabelServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(LabelServerTest, ServesBuiltinPage) {
  auto r = client_->Get("/");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_NE(r->body.find("<html"), std::string::npos);
}

TEST_F(LabelServerTest, LabelingFlow) {
  const std::string id = create(10);
  EXPECT_EQ(get_json("/api/sessions").at("sessions").size(), 1u);

  auto card = get_json("/api/session/" + id + "/next");
  EXPECT_FALSE(card.at("done").get<bool>());
  const auto pair_id = card.at("pair_id").get<std::uint64_t>();
  EXPECT_EQ(get_json("/api/session/" + id + "/next").at("pair_id"), pair_id);

  auto crop = client_->Get(card.at("crop_a").get<std::string>());
  ASSERT_TRUE(crop);
  EXPECT_EQ(crop->status, 200);
  EXPECT_EQ(crop->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(crop->body.substr(1, 3), "PNG");

  auto ack = post_json("/api/session/" + id + "/label", {{"pair_id", pair_id}, {"match", true}});
  EXPECT_EQ(ack.at("labeled"), 1);
  post_json("/api/session/" + id + "/label", {{"pair_id", pair_id}, {"match", false}}, 409);
  EXPECT_EQ(get_json("/api/session/" + id + "/stats").at("labeled"), 1);

  for (int i = 1; i < 10; ++i) {
    card = get_json("/api/session/" + id + "/next");
    post_json("/api/session/" + id + "/label",
              {{"pair_id", card.at("pair_id")}, {"match", i % 2 == 0}});
  }
  EXPECT_TRUE(get_json("/api/session/" + id + "/next").at("done").get<bool>());

  const auto prec = get_json("/api/session/" + id + "/precision?step=0.005");
  EXPECT_EQ(prec.at("labeled"), 10);
  const auto curve = store_->live_precision(id, threshold_sweep());
  const auto& points = prec.at("points");
  ASSERT_EQ(points.size(), curve.points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    EXPECT_EQ(points[i].at("support").get<std::uint64_t>(), curve.points[i].support);
  }

  post_json("/api/session/" + id + "/threshold", {{"value", 0.94}});
  EXPECT_EQ(store_->snapshot(id).chosen_threshold(), 0.94);
  const auto session = get_json("/api/session/" + id);
  EXPECT_DOUBLE_EQ(session.at("chosen_threshold").get<double>(), 0.94);

  auto log = client_->Get("/api/session/" + id + "/labels");
  ASSERT_TRUE(log);
  EXPECT_EQ(std::count(log->body.begin(), log->body.end(), '\n'), 10);
}

TEST_F(LabelServerTest, ErrorStatuses) {
  get_json("/api/session/missing/stats", 404);
  const std::string id = create(5);
  post_json("/api/session/" + id + "/label", {{"pair_id", 99}, {"match", true}}, 404);
  post_json("/api/session/" + id + "/label", {{"pair_id", 0}, {"match", "yes"}}, 400);
  get_json("/api/session/" + id + "/precision", 400);
  auto bad = client_->Post("/api/session/" + id + "/label", "{oops", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  auto side = client_->Get("/crops/0/c.png?session=" + id);
  ASSERT_TRUE(side);
  EXPECT_EQ(side->status, 404);
}

TEST_F(LabelServerTest, CropWithoutSessionUsesOnlySession) {
  create(5);
  auto r = client_->Get("/crops/0/b.png");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
}

TEST_F(LabelServerTest, LabelsDurableAcrossRestart) {
  const std::string id = create(6);
  post_json("/api/session/" + id + "/label", {{"pair_id", 0}, {"match", true}});
  stop();
  store_ = std::make_unique<SessionStore>(dir_ / "sessions");
  start(std::nullopt);
  EXPECT_EQ(get_json("/api/session/" + id + "/stats").at("labeled"), 1);
  EXPECT_EQ(get_json("/api/session/" + id + "/next").at("pair_id"), 1);
}

TEST_F(LabelServerTest, StaticUiDirectory) {
  stop();
  testing::write_text(dir_ / "ui" / "index.html", "<html>custom</html>");
  start(dir_ / "ui");
  auto r = client_->Get("/");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>custom</html>");
}

TEST(RenderCrop, FullAndSinglePixel) {
  TempDir dir;
  Image img(5, 4, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i);
  write_png(dir / "i.png", img);
  ObjectRecord r;
  r.image = "i.png";
  r.bbox = {0, 0, 5, 4};
  write_file_atomic(dir / "full.png", render_crop(r, dir.path()));
  EXPECT_EQ(read_image(dir / "full.png"), img);
  r.bbox = {2, 1, 1, 1};
  write_file_atomic(dir / "one.png", render_crop(r, dir.path()));
  const Image one = read_image(dir / "one.png");
  ASSERT_EQ(one.width, 1);
  EXPECT_EQ(one.pixels[0], img.at(2, 1)[0]);
  EXPECT_EQ(one.pixels[2], img.at(2, 1)[2]);
}

}  // namespace
}  // namespace forge
