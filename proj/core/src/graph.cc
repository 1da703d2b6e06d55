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

#include "gdamn/graph.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "gdamn/errors.h"

namespace gdamn {
namespace {

std::shared_ptr<const AggregationPattern> build_pattern(
    int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<std::pair<int, int>>> adj(n);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    adj[edges[e].u].push_back({edges[e].v, e});
    adj[edges[e].v].push_back({edges[e].u, e});
  }
  auto csr = std::make_shared<SparsePattern>();
  auto p = std::make_shared<AggregationPattern>();
  csr->row_ptr.assign(n + 1, 0);
  p->self_entry.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    adj[i].push_back({i, -1});
    std::sort(adj[i].begin(), adj[i].end());
    for (const auto& [j, e] : adj[i]) {
      if (j == i) p->self_entry[i] = static_cast<int>(csr->col.size());
      csr->col.push_back(j);
      p->row.push_back(i);
      p->edge_id.push_back(e);
    }
    csr->row_ptr[i + 1] = static_cast<int>(csr->col.size());
  }
  p->transpose_entry.resize(csr->col.size());
  for (int k = 0; k < csr->nnz(); ++k) {
    const int j = csr->col[k];
    const auto begin = csr->col.begin() + csr->row_ptr[j];
    const auto end = csr->col.begin() + csr->row_ptr[j + 1];
    p->transpose_entry[k] =
        static_cast<int>(std::lower_bound(begin, end, p->row[k]) -
                         csr->col.begin());
  }
  p->csr = std::move(csr);
  return p;
}

void check_split(const std::vector<int>& ids, int n, const char* name,
                 std::vector<char>& seen) {
  for (int i : ids) {
    if (i < 0 || i >= n) {
      throw GraphError(std::string(name) + " split: node " +
                       std::to_string(i) + " out of range");
    }
    if (seen[i]) {
      throw GraphError(std::string(name) + " split: node " +
                       std::to_string(i) + " appears in more than one split");
    }
    seen[i] = 1;
  }
}

}  // namespace

Graph::Graph(int n_nodes, int num_classes,
             std::vector<std::pair<int, int>> edges, Matrix features,
             std::vector<int> labels, Splits splits)
    : n_nodes_(n_nodes),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)),
      splits_(std::move(splits)) {
  if (n_nodes_ <= 0) throw GraphError("graph needs at least one node");
  if (num_classes_ < 1) throw GraphError("class count must be positive");
  if (features_.rows() != n_nodes_) {
    throw GraphError("feature matrix has " + std::to_string(features_.rows()) +
                     " rows for " + std::to_string(n_nodes_) + " nodes");
  }
  if (static_cast<int>(labels_.size()) != n_nodes_) {
    throw GraphError("label vector has " + std::to_string(labels_.size()) +
                     " entries for " + std::to_string(n_nodes_) + " nodes");
  }
  for (int i = 0; i < n_nodes_; ++i) {
    if (labels_[i] < 0 || labels_[i] >= num_classes_) {
      throw GraphError("node " + std::to_string(i) + " has label " +
                       std::to_string(labels_[i]) + " outside [0, " +
                       std::to_string(num_classes_) + ")");
    }
  }
  for (const auto& [a, b] : edges) {
    if (a < 0 || a >= n_nodes_ || b < 0 || b >= n_nodes_) {
      throw GraphError("edge (" + std::to_string(a) + ", " +
                       std::to_string(b) + ") references a missing node");
    }
    if (a != b) edges_.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  if (splits_.train.empty()) throw GraphError("train split is empty");
  std::vector<char> seen(n_nodes_, 0);
  check_split(splits_.train, n_nodes_, "train", seen);
  check_split(splits_.val, n_nodes_, "val", seen);
  check_split(splits_.test, n_nodes_, "test", seen);
  pattern_ = build_pattern(n_nodes_, edges_);
}

int Graph::degree(int i) const {
  const SparsePattern& csr = *pattern_->csr;
  return csr.row_ptr[i + 1] - csr.row_ptr[i] - 1;
}

Graph Graph::with_edges(const std::vector<Edge>& edges) const {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(edges.size());
  for (const Edge& e : edges) pairs.push_back({e.u, e.v});
  return Graph(n_nodes_, num_classes_, std::move(pairs), features_, labels_,
               splits_);
}

Graph Graph::with_features(Matrix features) const {
  Graph copy = *this;
  if (features.rows() != n_nodes_) {
    throw GraphError("replacement features have the wrong row count");
  }
  copy.features_ = std::move(features);
  return copy;
}

Matrix Graph::one_hot() const {
  Matrix y = Matrix::Zero(n_nodes_, num_classes_);
  for (int i = 0; i < n_nodes_; ++i) y(i, labels_[i]) = 1.0;
  return y;
}

Vector laplacian_weights(const Graph& g) {
  const AggregationPattern& p = g.pattern();
  Vector w(p.nnz());
  for (int k = 0; k < p.nnz(); ++k) {
    const double di = g.degree(p.row[k]) + 1.0;
    const double dj = g.degree(p.col(k)) + 1.0;
    w(k) = 1.0 / std::sqrt(di * dj);
  }
  return w;
}

Matrix to_dense(const Graph& g, const Vector& entry_weights) {
  const AggregationPattern& p = g.pattern();
  if (entry_weights.size() != p.nnz()) {
    throw DimensionError("to_dense: expected " + std::to_string(p.nnz()) +
                         " entry weights, got " +
                         std::to_string(entry_weights.size()));
  }
  Matrix a = Matrix::Zero(g.n_nodes(), g.n_nodes());
  for (int k = 0; k < p.nnz(); ++k) a(p.row[k], p.col(k)) = entry_weights(k);
  return a;
}

double inter_class_ratio(const Graph& g, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != g.n_nodes()) {
    throw GraphError("labels must cover every node");
  }
  if (g.n_edges() == 0) {
    throw GraphError("inter-class ratio is undefined on a graph with no edges");
  }
  int inter = 0;
  for (const Edge& e : g.edges()) inter += labels[e.u] != labels[e.v];
  return static_cast<double>(inter) / g.n_edges();
}

double inter_class_ratio(const Graph& g) {
  return inter_class_ratio(g, g.labels());
}

Graph perturb_inter_class(const Graph& g, double target_ratio,
                          std::uint64_t seed) {
  if (!(target_ratio >= 0.0 && target_ratio <= 1.0)) {
    throw InfeasibleTargetError("target ratio must lie in [0, 1]");
  }
  const std::vector<int>& y = g.labels();
  const int total = g.n_edges();
  if (total == 0) throw InfeasibleTargetError("graph has no edges to perturb");
  std::vector<Edge> inter, intra;
  for (const Edge& e : g.edges()) (y[e.u] != y[e.v] ? inter : intra).push_back(e);
  const int n_inter = static_cast<int>(inter.size());
  Rng rng(seed);

  std::vector<Edge> result;
  if (target_ratio * total < n_inter) {
    // Remove k inter edges: (n_inter - k) / (total - k) ~= target.
    int k = n_inter;
    if (target_ratio > 0.0) {
      k = static_cast<int>(std::lround((n_inter - target_ratio * total) /
                                       (1.0 - target_ratio)));
      k = std::clamp(k, 0, n_inter);
    }
    if (k == 0) return g;
    if (k == total) {
      throw InfeasibleTargetError("target removes every edge of the graph");
    }
    std::shuffle(inter.begin(), inter.end(), rng);
    result = intra;
    result.insert(result.end(), inter.begin() + k, inter.end());
  } else {
    const int k = static_cast<int>(std::lround(target_ratio * total)) - n_inter;
    if (k <= 0) return g;
    if (k > static_cast<int>(intra.size())) {
      throw InfeasibleTargetError("not enough intra-class edges to rewire");
    }
    std::vector<std::vector<int>> other_class(g.num_classes());
    for (int c = 0; c < g.num_classes(); ++c) {
      for (int i = 0; i < g.n_nodes(); ++i) {
        if (y[i] != c) other_class[c].push_back(i);
      }
    }
    std::set<Edge> present(g.edges().begin(), g.edges().end());
    std::shuffle(intra.begin(), intra.end(), rng);
    int rewired = 0;
    for (std::size_t idx = 0; idx < intra.size() && rewired < k; ++idx) {
      Edge e = intra[idx];
      const int keep = std::bernoulli_distribution(0.5)(rng) ? e.u : e.v;
      std::vector<int> candidates;
      for (int w : other_class[y[keep]]) {
        if (!present.count({std::min(keep, w), std::max(keep, w)})) {
          candidates.push_back(w);
        }
      }
      if (candidates.empty()) continue;
      const int w = candidates[std::uniform_int_distribution<std::size_t>(
          0, candidates.size() - 1)(rng)];
      present.erase(e);
      present.insert({std::min(keep, w), std::max(keep, w)});
      ++rewired;
    }
    if (rewired < k) {
      throw InfeasibleTargetError("no free inter-class pairs left to rewire");
    }
    result.assign(present.begin(), present.end());
  }
  Graph out = g.with_edges(result);
  const double achieved = inter_class_ratio(out);
  if (std::abs(achieved - target_ratio) > kRatioTolerance) {
    throw InfeasibleTargetError("reached ratio " + std::to_string(achieved) +
                                " for target " + std::to_string(target_ratio));
  }
  return out;
}

Graph oracle_graph(const Graph& g) {
  std::vector<Edge> keep;
  for (const Edge& e : g.edges()) {
    if (g.labels()[e.u] == g.labels()[e.v]) keep.push_back(e);
  }
  return g.with_edges(keep);
}

Graph generate_sbm(const SbmConfig& c) {
  if (c.blocks < 2) throw ConfigError("sbm.blocks", "must be at least 2");
  if (c.nodes_per_block < 1) {
    throw ConfigError("sbm.nodes_per_block", "must be positive");
  }
  if (!(c.p_in >= 0.0 && c.p_in <= 1.0)) {
    throw ConfigError("sbm.p_in", "must lie in [0, 1]");
  }
  if (!(c.p_out >= 0.0 && c.p_out <= 1.0)) {
    throw ConfigError("sbm.p_out", "must lie in [0, 1]");
  }
  if (c.feature_dim < c.blocks) {
    throw ConfigError("sbm.feature_dim", "must be at least the block count");
  }
  if (!(c.feature_noise >= 0.0)) {
    throw ConfigError("sbm.feature_noise", "must be non-negative");
  }
  if (c.train_per_class < 1 ||
      c.val_per_class < 0 ||
      c.train_per_class + c.val_per_class > c.nodes_per_block) {
    throw ConfigError("sbm.train_per_class",
                      "train/val per class must fit inside one block");
  }
  const int n = c.blocks * c.nodes_per_block;
  Rng rng(c.seed);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i / c.nodes_per_block;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? c.p_in : c.p_out;
      if (unit(rng) < p) edges.push_back({i, j});
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix x(n, c.feature_dim);
  for (int i = 0; i < n; ++i) {
    for (int f = 0; f < c.feature_dim; ++f) {
      x(i, f) = c.feature_noise * noise(rng);
    }
    x(i, labels[i]) += 1.0;
  }

  Splits splits;
  for (int b = 0; b < c.blocks; ++b) {
    std::vector<int> ids(c.nodes_per_block);
    std::iota(ids.begin(), ids.end(), b * c.nodes_per_block);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (int r = 0; r < c.nodes_per_block; ++r) {
      if (r < c.train_per_class) {
        splits.train.push_back(ids[r]);
      } else if (r < c.train_per_class + c.val_per_class) {
        splits.val.push_back(ids[r]);
      } else {
        splits.test.push_back(ids[r]);
      }
    }
  }
  for (auto* s : {&splits.train, &splits.val, &splits.test}) {
    std::sort(s->begin(), s->end());
  }
  return Graph(n, c.blocks, std::move(edges), std::move(x), std::move(labels),
               std::move(splits));
}

}  // namespace gdamn
