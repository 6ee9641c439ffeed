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


#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <thread>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "forge/cli.hpp"
#include "forge/dataset_forge.hpp"
#include "forge/eval_protocol.hpp"
#include "forge/io.hpp"
#include "forge/recurrence_graph.hpp"
#include "forge/synth.hpp"
#include "oracles.hpp"

namespace forge {
namespace {

using testing::TempDir;

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "forge");
  args.insert(args.begin() + 1, "--log-level=off");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    FixtureSpec spec;
    spec.images = false;
    info_ = write_fixture_corpus(dir_ / "corpus", spec);
    manifest_ = info_.manifest.string();
    out_ = (dir_ / "out").string();
  }

  TempDir dir_;
  FixtureInfo info_;
  std::string manifest_;
  std::string out_;
};

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_cli({}), 1);
  EXPECT_EQ(run_cli({"--help"}), 0);
  EXPECT_EQ(run_cli({"graph", "build", "--corpus", manifest_, "--frobnicate"}), 1);
  EXPECT_EQ(run_cli({"graph", "build"}), 1);
  EXPECT_EQ(run_cli({"nosuchcommand"}), 1);
}

TEST_F(CliTest, GraphBuildHappyPath) {
  EXPECT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_, "--lo", "0.93",
                     "--hi", "0.975", "--kmax", "5"}),
            0);
  const auto g = read_graph(dir_ / "out" / "neighbors.jsonl");
  EXPECT_FALSE(g.nodes.empty());
}

TEST_F(CliTest, InvalidBandIsExitOne) {
  EXPECT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_, "--lo", "0.99",
                     "--hi", "0.9"}),
            1);
}

TEST_F(CliTest, MissingCorpusIsExitTwo) {
  EXPECT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", out_ + "/none.json"}), 2);
}

TEST_F(CliTest, StatsMatchDegreeOracle) {
  ASSERT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_}), 0);
  ASSERT_EQ(run_cli({"--out", out_, "analyze", "stats", "--graph", out_ + "/neighbors.jsonl",
                     "--corpus", manifest_}),
            0);
  const auto j = nlohmann::json::parse(read_file(dir_ / "out" / "stats.json"));
  const auto corpus = load_corpus(info_.manifest);
  const auto g = read_graph(dir_ / "out" / "neighbors.jsonl");
  std::uint64_t ge1 = 0, ge3 = 0;
  for (const auto& r : corpus.records) {
    ge1 += g.degree(r.id) >= 1;
    ge3 += g.degree(r.id) >= 3;
  }
  EXPECT_EQ(j.at("num_objects").get<std::uint64_t>(), corpus.records.size());
  EXPECT_EQ(j.at("count_ge1").get<std::uint64_t>(), ge1);
  EXPECT_EQ(j.at("count_ge3").get<std::uint64_t>(), ge3);
  EXPECT_EQ(j.at("pct_ge3_text").get<std::string>(),
            testing::oracle_percent(ge3, corpus.records.size()));
}

TEST_F(CliTest, StatsFromCounts) {
  EXPECT_EQ(run_cli({"--out", out_, "analyze", "stats", "--num-objects", "362684",
                     "--count-ge1", "17119", "--count-ge3", "17119"}),
            0);
  const auto j = nlohmann::json::parse(read_file(dir_ / "out" / "stats.json"));
  EXPECT_EQ(j.at("pct_ge3_text"), "4.7%");
}

TEST_F(CliTest, IndexBuildQueryAndRecall) {
  EXPECT_EQ(run_cli({"--out", out_, "index", "build", "--corpus", manifest_, "--mode",
                     "partitioned"}),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "out" / "index.omix"));
  EXPECT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_, "--index",
                     out_ + "/index.omix"}),
            0);
  EXPECT_EQ(run_cli({"--out", out_, "index", "query", "--corpus", manifest_, "--id", "100"}), 0);
  EXPECT_EQ(run_cli({"--out", out_, "index", "query", "--corpus", manifest_, "--id", "1"}), 1);
  EXPECT_EQ(run_cli({"--out", out_, "index", "recall", "--corpus", manifest_, "--k", "3"}), 0);
}

TEST_F(CliTest, AnalysesWriteReports) {
  ASSERT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_}), 0);
  EXPECT_EQ(run_cli({"--out", out_, "analyze", "hist", "--corpus", manifest_}), 0);
  EXPECT_EQ(run_cli({"--out", out_, "analyze", "breakdown", "--graph",
                     out_ + "/neighbors.jsonl", "--corpus", manifest_}),
            0);
  EXPECT_EQ(run_cli({"--out", out_, "analyze", "scaling", "--corpus", manifest_,
                     "--fractions", "0.5,1.0"}),
            0);
  for (const char* f : {"histogram.json", "histogram.csv", "breakdown.json", "scaling.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(dir_ / "out" / f)) << f;
  }
}

TEST_F(CliTest, PrecisionFromLabels) {
  testing::write_text(dir_ / "labels.jsonl",
                      "{\"a\":1,\"b\":2,\"sim\":0.95,\"match\":true}\n"
                      "{\"a\":3,\"b\":4,\"sim\":0.92,\"match\":false}\n");
  EXPECT_EQ(run_cli({"--out", out_, "analyze", "precision", "--labels",
                     (dir_ / "labels.jsonl").string()}),
            0);
  const auto j = nlohmann::json::parse(read_file(dir_ / "out" / "precision.json"));
  EXPECT_EQ(j.at("points").size(), 31u);
}

TEST_F(CliTest, DatasetEmitAndManifest) {
  ASSERT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_}), 0);
  EXPECT_EQ(run_cli({"--out", out_ + "/ds", "dataset", "emit", "--task", "subject", "--graph",
                     out_ + "/neighbors.jsonl", "--corpus", manifest_, "--sidecars",
                     (dir_ / "corpus" / "sidecars").string(), "--strict"}),
            0);
  EXPECT_EQ(read_examples(dir_ / "out" / "ds" / "examples.jsonl").size(), info_.in_band_objects);
  EXPECT_EQ(run_cli({"--out", out_ + "/m", "dataset", "manifest", "--task", "subject"}), 0);
  const auto m = parse_manifest(read_file(dir_ / "out" / "m" / "training_manifest.json"));
  EXPECT_EQ(*m.gamma_text, 7.5);
}

TEST_F(CliTest, PipelineCorruptFeaturesExitTwo) {
  std::string bytes = read_file(dir_ / "corpus" / "features.bin");
  bytes.resize(bytes.size() - 3);
  testing::write_text(dir_ / "corpus" / "features.bin", bytes);
  EXPECT_EQ(run_cli({"--out", out_, "pipeline_all", "--corpus", manifest_}), 2);
}

TEST_F(CliTest, PipelineAliasAndSynth) {
  EXPECT_EQ(run_cli({"--out", out_ + "/g", "--seed", "3", "synth", "--kind", "groups",
                     "--groups", "30", "--dim", "32"}),
            0);
  EXPECT_EQ(run_cli({"--out", out_ + "/p", "pipeline", "--corpus", out_ + "/g/manifest.json",
                     "--task", "subject"}),
            0);
  EXPECT_TRUE(std::filesystem::exists(dir_ / "out" / "p" / "stats.json"));
}

TEST_F(CliTest, EvalCommands) {
  const std::vector<std::string> keys{"r", "g1", "g2"};
  write_embedding_table(dir_ / "e.bin", keys,
                        FeatureMatrix(2, std::vector<float>{1, 0, 1, 0.1f, 0, 1}));
  testing::write_text(dir_ / "t.jsonl",
                      "{\"ref\":\"r\",\"gen1\":\"g1\",\"gen2\":\"g2\",\"choice\":1}\n");
  EXPECT_EQ(run_cli({"--out", out_, "eval", "agreement", "--embeddings",
                     (dir_ / "e.bin").string(), "--triplets", (dir_ / "t.jsonl").string()}),
            0);
  const auto j = nlohmann::json::parse(read_file(dir_ / "out" / "agreement.json"));
  EXPECT_EQ(j.at("accuracy").get<double>(), 1.0);
  EXPECT_EQ(run_cli({"--out", out_, "eval", "identity", "--embeddings",
                     (dir_ / "e.bin").string(), "--reference", (dir_ / "e.bin").string()}),
            0);
}

TEST_F(CliTest, SigintExits130) {
#ifndef FORGE_CLI_PATH
  GTEST_SKIP() << "CLI binary path not configured";
#else
  ASSERT_EQ(run_cli({"--out", out_, "graph", "build", "--corpus", manifest_}), 0);
  const pid_t pid = fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    const std::string graph = out_ + "/neighbors.jsonl";
    execl(FORGE_CLI_PATH, FORGE_CLI_PATH, "--log-level=off", "--out", out_.c_str(), "label",
          "serve", "--graph", graph.c_str(), "--corpus", manifest_.c_str(), "--port", "0",
          static_cast<char*>(nullptr));
    _exit(99);
  }
  std::this_thread::sleep_for(std::chrono::milliseconds(700));
  kill(pid, SIGINT);
  int status = 0;
  ASSERT_EQ(waitpid(pid, &status, 0), pid);
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 130);
#endif
}

}  // namespace
}  // namespace forge
