// Copyright 2026 The GDAMN Authors.
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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.h"
#include "gdamn/data_io.h"
#include "gdamn/errors.h"
#include "gdamn/experiments.h"

namespace gdamn {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    root_ = fs::temp_directory_path() /
            (std::string("gdamn_exp_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  // Tiny SBM and short phases so a full command finishes in well under a
  // second.
  ExperimentSpec tiny(const std::string& command, const std::string& out) const {
    ExperimentSpec spec;
    spec.command = command;
    spec.sbm.nodes_per_block = 20;
    spec.sbm.feature_dim = 8;
    spec.sbm.train_per_class = 3;
    spec.sbm.val_per_class = 5;
    spec.sbm.p_in = 0.25;
    spec.sbm.p_out = 0.04;
    spec.hp.epochs = 8;
    spec.hp.hidden = 8;
    spec.hp.em_iterations = 1;
    spec.seeds = {0, 1};
    spec.out_dir = out.empty() ? "" : (root_ / out).string();
    return spec;
  }

  int cli(std::vector<std::string> args, std::string* err_text = nullptr) {
    args.insert(args.begin(), "gdamn");
    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (err_text) *err_text = err.str();
    return code;
  }

  std::vector<std::string> tiny_flags() const {
    return {"--set", "epochs=8", "--set", "hidden=8", "--set", "em_iterations=1",
            "--set", "sbm.nodes_per_block=20", "--set", "sbm.feature_dim=8",
            "--set", "sbm.train_per_class=3", "--set", "sbm.val_per_class=5"};
  }

  fs::path root_;
};

TEST(Stats, SummarizeUsesSampleStd) {
  const Stat s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_DOUBLE_EQ(s.std, std::sqrt(5.0 / 3.0));
  EXPECT_EQ(s.n, 4);
  EXPECT_EQ(summarize({7.0}).std, 0.0);
}

TEST(Stats, SpearmanExamples) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  // Monotone but nonlinear.
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4, 5}, {1, 8, 27, 64, 125}), 1.0);
  // Ties get average ranks: x ranks (1.5, 1.5, 3), y ranks (1, 2, 3).
  const double mx = 2.0, my = 2.0;
  const double sxy = (1.5 - mx) * (1 - my) + (1.5 - mx) * (2 - my) + (3 - mx) * (3 - my);
  const double sxx = 2 * 0.25 + 1.0, syy = 2.0;
  EXPECT_NEAR(spearman({5, 5, 9}, {1, 2, 3}), sxy / std::sqrt(sxx * syy), 1e-12);
  EXPECT_THROW(spearman({1, 2}, {1}), std::invalid_argument);
}

TEST(Config, ApplySplitsKeys) {
  Hyperparams hp;
  SbmConfig sbm;
  apply_config({{"beta", "0.2"}, {"sbm.p_out", "0.05"}, {"sbm.blocks", "3"}}, hp, sbm);
  EXPECT_EQ(hp.beta, 0.2);
  EXPECT_EQ(sbm.p_out, 0.05);
  EXPECT_EQ(sbm.blocks, 3);
  try {
    apply_config({{"sbm.colour", "red"}}, hp, sbm);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "sbm.colour");
  }
  EXPECT_THROW(apply_config({{"sbm.p_in", "x"}}, hp, sbm), ConfigError);
}

TEST_F(ExperimentTest, TrainWritesArtifacts) {
  const ExperimentSpec spec = tiny("train", "train");
  const TrainSummary s = cmd_train(spec);
  ASSERT_EQ(s.gdamn_acc.size(), 2u);
  EXPECT_EQ(s.acc.n, 2);
  for (const char* name : {"results.csv", "results.csv.json", "aggregate.csv",
                           "config.txt", "stable_weights_seed0.csv",
                           "stable_weights_seed1.csv"}) {
    EXPECT_TRUE(fs::exists(root_ / "train" / name)) << name;
  }
  const auto records = read_results((root_ / "train" / "results.csv").string());
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].seed, 0u);
  EXPECT_EQ(records[1].hyperparams.at("epochs"), "8");
  EXPECT_EQ(records[0].test_acc, s.gdamn_acc[0]);
  const Graph g = spec.graph_for(0);
  EXPECT_EQ(read_entry_weights((root_ / "train" / "stable_weights_seed0.csv").string(), g)
                .size(),
            g.pattern().nnz());
}

TEST_F(ExperimentTest, ExistingOutputNeedsOverwrite) {
  ExperimentSpec spec = tiny("train", "busy");
  fs::create_directories(root_ / "busy");
  std::ofstream(root_ / "busy" / "keep.txt") << "x";
  try {
    cmd_train(spec);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "out");
  }
  spec.overwrite = true;
  EXPECT_NO_THROW(cmd_train(spec));
}

TEST_F(ExperimentTest, EmptyOutDirWritesNothing) {
  cmd_train(tiny("train", ""));
  EXPECT_TRUE(fs::is_empty(root_));
}

TEST_F(ExperimentTest, Fig1aMarksInfeasibleRatios) {
  ExperimentSpec spec = tiny("fig1a", "fig1a");
  spec.sbm.p_out = 0.0;  // no inter-class edges to keep; raising rewires
  spec.ratios = {0.0, 0.3};
  spec.seeds = {0};
  const auto rows = cmd_fig1a(spec);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_FALSE(rows[0].skipped);
  EXPECT_EQ(rows[0].achieved_ratio, 0.0);
  EXPECT_NEAR(rows[1].achieved_ratio, 0.3, kRatioTolerance);
  EXPECT_TRUE(fs::exists(root_ / "fig1a" / "fig1a.csv"));

  ExperimentSpec full = tiny("fig1a", "");
  full.seeds = {0};
  full.ratios = {1.0};
  EXPECT_NEAR(cmd_fig1a(full)[0].achieved_ratio, 1.0, kRatioTolerance);
}

TEST_F(ExperimentTest, RetrainNeedsTrainExport) {
  ExperimentSpec spec = tiny("retrain", "");
  spec.from_dir = (root_ / "nothing").string();
  try {
    cmd_retrain(spec);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "from");
  }
}

TEST_F(ExperimentTest, RetrainReadsLearnedWeights) {
  cmd_train(tiny("train", "t"));
  ExperimentSpec spec = tiny("retrain", "r");
  spec.from_dir = (root_ / "t").string();
  const auto runs = cmd_retrain(spec);
  ASSERT_EQ(runs.size(), 6u);
  for (const RetrainRun& r : runs) {
    EXPECT_GE(r.epochs_to_90, 1);
    EXPECT_LE(r.epochs_to_90, spec.hp.epochs);
    EXPECT_EQ(r.history.size(), static_cast<std::size_t>(spec.hp.epochs));
  }
  EXPECT_TRUE(fs::exists(root_ / "r" / "retrain_summary.csv"));
}

TEST_F(ExperimentTest, Fig4AndConnectivityAndFig1bRun) {
  ExperimentSpec fig4 = tiny("fig4", "");
  fig4.samples = {0, 2};
  const auto rows = cmd_fig4(fig4);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].samples, 2);
  EXPECT_EQ(rows[0].acc.size(), 2u);

  const auto conn = cmd_connectivity(tiny("connectivity", ""));
  for (const char* key : {"laplacian", "uniform", "learned"}) {
    ASSERT_EQ(conn.ratio.at(key).size(), 2u) << key;
  }
  const auto fig1b = cmd_fig1b(tiny("fig1b", ""));
  for (const char* key : {"original/PR", "original/NR", "oracle/PR", "oracle/NR"}) {
    EXPECT_EQ(fig1b.acc.at(key).size(), 2u) << key;
  }
}

TEST_F(ExperimentTest, CliSuccessAndByteIdenticalReruns) {
  auto run = [&](const std::string& out) {
    std::vector<std::string> args{"train", "--seeds", "0-1", "--out",
                                  (root_ / out).string()};
    for (const std::string& f : tiny_flags()) args.push_back(f);
    return cli(args);
  };
  ASSERT_EQ(run("a"), kExitOk);
  ASSERT_EQ(run("b"), kExitOk);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(root_ / "a")) {
    const fs::path other = root_ / "b" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
    ++files;
  }
  EXPECT_GE(files, 5);
}

TEST_F(ExperimentTest, CliConfigErrorsExitTwo) {
  std::string err;
  EXPECT_EQ(cli({"train", "--set", "beta=-1", "--out", (root_ / "x").string()}, &err),
            kExitConfig);
  EXPECT_NE(err.find("beta"), std::string::npos);
  EXPECT_EQ(cli({"train", "--set", "nonsense=1", "--out", (root_ / "x").string()}),
            kExitConfig);
  EXPECT_EQ(cli({"train", "--seeds", "3-1", "--out", (root_ / "x").string()}),
            kExitConfig);
  EXPECT_EQ(cli({"train", "--bogus-flag"}), kExitConfig);
  EXPECT_EQ(cli({"retrain", "--out", (root_ / "x").string()}), kExitConfig);
  EXPECT_EQ(cli({"train", "--config", (root_ / "missing.cfg").string(), "--out",
                 (root_ / "x").string()}),
            kExitConfig);
  fs::create_directories(root_ / "full");
  std::ofstream(root_ / "full" / "f") << "x";
  EXPECT_EQ(cli({"train", "--out", (root_ / "full").string()}), kExitConfig);
  EXPECT_EQ(cli({}), kExitConfig);
}

TEST_F(ExperimentTest, CliRuntimeFailureExitsThree) {
  // Valid JSON bundle whose label lies outside [0, C).
  std::ofstream(root_ / "bad.json")
      << R"({"n_nodes": 2, "C": 1, "edges": [[0, 1]], "features": [[1], [2]],
            "labels": [0, 4], "splits": {"train": [0], "val": [], "test": [1]}})";
  std::string err;
  EXPECT_EQ(cli({"train", "--graph", (root_ / "bad.json").string(), "--out",
                 (root_ / "x").string()},
                &err),
            kExitRuntime);
  EXPECT_NE(err.find("label"), std::string::npos) << err;
}

TEST_F(ExperimentTest, CliMissingGraphIsConfigError) {
  std::string err;
  EXPECT_EQ(cli({"train", "--graph", (root_ / "absent.json").string(), "--out",
                 (root_ / "x").string()},
                &err),
            kExitConfig);
  EXPECT_NE(err.find("absent.json"), std::string::npos);
}

TEST_F(ExperimentTest, CliReadsGraphBundleAndConfigFile) {
  write_graph_bundle((root_ / "g.json").string(), tiny("train", "").graph_for(0));
  std::ofstream(root_ / "c.cfg") << "epochs=5\nhidden=8\nem_iterations=1\n";
  ASSERT_EQ(cli({"train", "--graph", (root_ / "g.json").string(), "--config",
                 (root_ / "c.cfg").string(), "--seeds", "3", "--out",
                 (root_ / "o").string()}),
            kExitOk);
  const auto records = read_results((root_ / "o" / "results.csv").string());
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].seed, 3u);
  EXPECT_EQ(records[0].hyperparams.at("epochs"), "5");
}

}  // namespace
}  // namespace gdamn
