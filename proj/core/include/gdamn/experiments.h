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

// Experiment harness behind the `gdamn` tool. Each command runs a seed sweep
// and writes plot-ready CSV, a results.csv of ResultRecords (with JSON
// sidecar) and a config snapshot into the output directory.

#ifndef GDAMN_EXPERIMENTS_H_
#define GDAMN_EXPERIMENTS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gdamn/data_io.h"
#include "gdamn/graph.h"
#include "gdamn/trainer.h"

namespace gdamn {

struct ExperimentSpec {
  std::string command;
  // JSON graph bundle or citation manifest; SBM from `sbm` when absent
  // (regenerated per run seed).
  std::optional<std::string> graph_path;
  SbmConfig sbm;
  Hyperparams hp;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir;
  bool overwrite = false;
  std::vector<double> ratios;  // fig1a
  std::vector<int> samples;    // fig4
  std::string from_dir;        // retrain: a finished `train` output directory

  // Graph for a run seed.
  Graph graph_for(std::uint64_t seed) const;
  // hp keys plus sbm.* keys (and graph when file based).
  std::map<std::string, std::string> snapshot() const;
};

// Splits config keys into hyperparameters and sbm.* settings. Unknown keys
// throw ConfigError.
void apply_config(const std::map<std::string, std::string>& kv,
                  Hyperparams& hp, SbmConfig& sbm);

// JSON with "n_nodes" is a graph bundle; anything else a citation manifest.
Graph load_graph(const std::string& path);
bool is_graph_bundle(const std::string& path);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1)
  int n = 0;
};
Stat summarize(const std::vector<double>& values);

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct TrainSummary {
  std::vector<double> gdamn_acc;  // per seed
  Stat acc;
  std::vector<double> connectivity_ratio;  // learned A^stable, per seed
};
TrainSummary cmd_train(const ExperimentSpec& spec);

struct Fig1aRow {
  double ratio = 0.0;
  bool skipped = false;
  std::vector<double> acc;
  Stat stat;
  double achieved_ratio = 0.0;  // mean over seeds
  double edges = 0.0;           // mean over seeds
};
std::vector<Fig1aRow> cmd_fig1a(const ExperimentSpec& spec);

struct Fig1bResult {
  // key: "original/PR", "original/NR", "oracle/PR", "oracle/NR"
  std::map<std::string, std::vector<double>> acc;
  std::map<std::string, Stat> stat;
};
Fig1bResult cmd_fig1b(const ExperimentSpec& spec);

struct Fig4Row {
  int samples = 0;  // 0 = stable fusion
  std::vector<double> acc;
  Stat stat;
};
std::vector<Fig4Row> cmd_fig4(const ExperimentSpec& spec);

struct ConnectivitySummary {
  // key: "laplacian", "uniform", "learned"; per-seed ratios.
  std::map<std::string, std::vector<double>> ratio;
  std::map<std::string, Stat> stat;
};
ConnectivitySummary cmd_connectivity(const ExperimentSpec& spec);

struct RetrainRun {
  std::string variant;  // "original", "oracle", "learned"
  std::uint64_t seed = 0;
  double final_acc = 0.0;
  int epochs_to_90 = 0;  // first epoch reaching 90% of final test accuracy
  std::vector<EpochRecord> history;
};
std::vector<RetrainRun> cmd_retrain(const ExperimentSpec& spec);

}  // namespace gdamn

#endif  // GDAMN_EXPERIMENTS_H_
