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

// Dataset ingestion (citation manifests, JSON graph bundles, edge lists)
// and result persistence (CSV + JSON sidecar).
//
// Citation manifest (JSON, paths relative to the manifest):
//   {"name": "cora",
//    "edges": "cora.edges",          // "i j" per line, 0-indexed
//    "features": "cora.features",    // header "n d", then "i j value" lines
//    "labels": "cora.labels",        // one class id per line
//    "splits": "cora.splits.json",   // {"train": [...], "val": [...], "test": [...]}
//    "classes": 7,                   // optional, else max label + 1
//    "expected_stats": {"n_nodes": 2708, "n_edges": 5278, "d": 1433, "C": 7,
//                       "train": 140, "val": 500, "test": 1000}}

#ifndef GDAMN_DATA_IO_H_
#define GDAMN_DATA_IO_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gdamn/graph.h"

namespace gdamn {

struct ExpectedStats {
  std::optional<int> n_nodes, n_edges, d, C, train, val, test;
};

struct DatasetManifest {
  std::string name;
  std::string edges;
  std::string features;
  std::string labels;
  std::string splits;
  std::optional<int> classes;
  ExpectedStats expected;

  // Paths in the result are resolved against the manifest's directory.
  static DatasetManifest read(const std::string& path);
};

// Undirected, deduplicated graph with row-normalized features (rows summing
// to zero are left untouched). Throws IntegrityError naming the first
// statistic that disagrees with expected_stats.
Graph load_citation(const DatasetManifest& manifest);

// {n_nodes, C, edges, features, labels, splits}; features are either dense
// rows or {"dim": d, "triples": [[i, j, v], ...]}.
Graph read_graph_bundle(const std::string& path);
void write_graph_bundle(const std::string& path, const Graph& g);

std::vector<std::pair<int, int>> read_edge_list(const std::string& path);
void write_edge_list(const std::string& path, const std::vector<Edge>& edges);

// "i,j,weight" rows for every pattern entry.
void write_entry_weights(const std::string& path, const Graph& g,
                         const Vector& weights);
// Inverse of write_entry_weights; every pattern entry must be present.
Vector read_entry_weights(const std::string& path, const Graph& g);

void write_matrix_csv(const std::string& path, const Matrix& m);

struct EpochMetric {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  friend bool operator==(const EpochMetric&, const EpochMetric&) = default;
};

struct ResultRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> hyperparams;
  std::vector<EpochMetric> epochs;
  double test_acc = 0.0;
  std::map<std::string, double> metrics;

  // Accuracies in [0, 1], epochs strictly increasing.
  void validate() const;
  friend bool operator==(const ResultRecord&, const ResultRecord&) = default;
};

// Writes `path` (CSV: experiment,seed,epoch,split,metric,value) and
// `path` + ".json". Throws std::runtime_error with the path on I/O failure.
void write_results(const std::vector<ResultRecord>& records,
                   const std::string& path);
std::vector<ResultRecord> read_results(const std::string& path);
std::vector<ResultRecord> read_results_json(const std::string& path);

// RFC 4180 helpers shared by the CSV writers.
std::string csv_field(const std::string& field);
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace gdamn

#endif  // GDAMN_DATA_IO_H_
