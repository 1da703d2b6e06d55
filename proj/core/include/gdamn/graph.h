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

// Undirected simple graphs with node features, labels and splits, plus the
// structural analytics used by the experiments (Laplacian coefficients,
// inter-class edge ratio, ratio perturbation, SBM generation).

#ifndef GDAMN_GRAPH_H_
#define GDAMN_GRAPH_H_

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "gdamn/tensor.h"

namespace gdamn {

// Undirected edge, always stored with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Splits {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Aggregation support N(i) ∪ {i} in CSR form with columns sorted per row.
// Per-entry tensors (nnz x 1) follow this entry order.
struct AggregationPattern {
  std::shared_ptr<const SparsePattern> csr;
  std::vector<int> row;              // row of each entry
  std::vector<int> edge_id;          // undirected edge index, -1 on self-loops
  std::vector<int> self_entry;       // entry (i, i) for each node
  std::vector<int> transpose_entry;  // entry (j, i) for entry (i, j)

  int nnz() const { return csr->nnz(); }
  int rows() const { return csr->rows(); }
  int col(int k) const { return csr->col[k]; }
};

class Graph {
 public:
  // Edges are normalized: self-loops dropped, (i, j) and (j, i) merged,
  // duplicates removed. Throws GraphError on out-of-range ids, a label
  // outside [0, C), shape mismatches, or overlapping/empty-train splits.
  Graph(int n_nodes, int num_classes, std::vector<std::pair<int, int>> edges,
        Matrix features, std::vector<int> labels, Splits splits);

  int n_nodes() const { return n_nodes_; }
  int num_classes() const { return num_classes_; }
  int feature_dim() const { return static_cast<int>(features_.cols()); }
  int n_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const Splits& splits() const { return splits_; }
  const AggregationPattern& pattern() const { return *pattern_; }
  // Number of neighbors, self excluded.
  int degree(int i) const;

  // Same nodes, features, labels and splits over a new edge set.
  Graph with_edges(const std::vector<Edge>& edges) const;
  Graph with_features(Matrix features) const;

  // n x C one-hot matrix of the ground-truth labels.
  Matrix one_hot() const;

 private:
  int n_nodes_;
  int num_classes_;
  std::vector<Edge> edges_;
  Matrix features_;
  std::vector<int> labels_;
  Splits splits_;
  std::shared_ptr<const AggregationPattern> pattern_;
};

// alpha_ij = 1 / sqrt((|N(i)|+1)(|N(j)|+1)) for every pattern entry.
Vector laplacian_weights(const Graph& g);

// Per-entry weights expanded into a dense n x n matrix (rows = receivers).
Matrix to_dense(const Graph& g, const Vector& entry_weights);

// Fraction of edges whose endpoints carry different labels. Throws
// GraphError when the graph has no edges.
double inter_class_ratio(const Graph& g, const std::vector<int>& labels);
double inter_class_ratio(const Graph& g);

// Moves the inter-class edge ratio to within +-0.02 of `target_ratio`.
// Lowering removes randomly chosen inter-class edges (edge count shrinks);
// raising rewires randomly chosen intra-class edges, keeping one endpoint
// and redirecting the other to a node of a different class (edge count
// preserved). Throws InfeasibleTargetError when the target cannot be met,
// including targets outside [0, 1].
Graph perturb_inter_class(const Graph& g, double target_ratio,
                          std::uint64_t seed);

inline constexpr double kRatioTolerance = 0.02;

// Original graph with every inter-class edge removed.
Graph oracle_graph(const Graph& g);

struct SbmConfig {
  int blocks = 4;
  int nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.02;
  int feature_dim = 32;
  double feature_noise = 1.0;
  int train_per_class = 20;
  int val_per_class = 30;
  std::uint64_t seed = 0;
};

// Stochastic block model. Node i belongs to block i / nodes_per_block;
// features are the unit basis vector of the block plus N(0, noise^2)
// entries. Splits are drawn per class. Throws ConfigError on invalid
// settings (blocks < 2, probabilities outside [0, 1], feature_dim < blocks,
// splits larger than a block).
Graph generate_sbm(const SbmConfig& config);

}  // namespace gdamn

#endif  // GDAMN_GRAPH_H_
