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

// Independent reference computations for the tests: plain loops over dense
// matrices, written without the library's tape or sparse kernels.

#ifndef GDAMN_TESTS_ORACLES_H_
#define GDAMN_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gdamn/graph.h"
#include "gdamn/tensor.h"

namespace gdamn::oracle {

inline Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  }
  return m;
}

// Random row-stochastic matrix with strictly positive entries.
inline Matrix random_stochastic(int rows, int cols, Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  }
  return c;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double cosine(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                     double eps = kEpsilon) {
  return a.dot(b) / (std::max(a.norm(), eps) * std::max(b.norm(), eps));
}

// Dense 0/1 adjacency with self-loops.
inline Matrix adjacency_with_self(const Graph& g) {
  Matrix a = Matrix::Identity(g.n_nodes(), g.n_nodes());
  for (const Edge& e : g.edges()) a(e.u, e.v) = a(e.v, e.u) = 1.0;
  return a;
}

// Dense n x n weights from a per-entry vector, by looking up (row, col).
inline Matrix dense_weights(const Graph& g, const Vector& entries) {
  Matrix w = Matrix::Zero(g.n_nodes(), g.n_nodes());
  const AggregationPattern& p = g.pattern();
  for (int k = 0; k < p.nnz(); ++k) w(p.row[k], p.col(k)) = entries(k);
  return w;
}

// One GCN pass written node by node: m_i = sum_j a_ij h_j; h' = act(m W + b).
inline Matrix gcn(const Matrix& a, const Matrix& x,
                  const std::vector<Matrix>& weights,
                  const std::vector<Matrix>& biases) {
  Matrix h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Matrix& w = weights[l];
    Matrix next(h.rows(), w.cols());
    for (int i = 0; i < h.rows(); ++i) {
      std::vector<double> m(h.cols(), 0.0);
      for (int j = 0; j < h.rows(); ++j) {
        if (a(i, j) == 0.0) continue;
        for (int f = 0; f < h.cols(); ++f) m[f] += a(i, j) * h(j, f);
      }
      for (int o = 0; o < w.cols(); ++o) {
        double s = biases[l](0, o);
        for (int f = 0; f < h.cols(); ++f) s += m[f] * w(f, o);
        next(i, o) = (l + 1 < weights.size()) ? std::max(0.0, s) : s;
      }
    }
    h = next;
  }
  return h;
}

// Row softmax over entries where mask != 0, weighted by the mask value.
inline Matrix weighted_masked_softmax(const Matrix& scores, const Matrix& mask) {
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (int i = 0; i < scores.rows(); ++i) {
    double z = 0.0;
    for (int j = 0; j < scores.cols(); ++j) {
      if (mask(i, j) != 0.0) z += mask(i, j) * std::exp(scores(i, j));
    }
    for (int j = 0; j < scores.cols(); ++j) {
      if (mask(i, j) != 0.0) out(i, j) = mask(i, j) * std::exp(scores(i, j)) / z;
    }
  }
  return out;
}

// Soft attention written directly: h = s .* relu(x W), -cos scores, softmax
// over the weighted support.
inline Matrix soft_attention(const Matrix& x, const Matrix& proj,
                             const Matrix& rescale, const Matrix& support) {
  Matrix h = matmul(x, proj);
  for (int i = 0; i < h.rows(); ++i) {
    for (int f = 0; f < h.cols(); ++f) {
      h(i, f) = std::max(0.0, h(i, f)) * rescale(0, f);
    }
  }
  Matrix scores = Matrix::Zero(x.rows(), x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.rows(); ++j) {
      scores(i, j) = -cosine(h.row(i), h.row(j));
    }
  }
  return weighted_masked_softmax(scores, support);
}

inline double kl_bernoulli(double q, double p) {
  return q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
}

inline Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (int j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - m);
    for (int j = 0; j < logits.cols(); ++j) {
      out(i, j) = logits(i, j) - m - std::log(z);
    }
  }
  return out;
}

// Central finite difference of f at parameter entry (r, c).
inline double central_difference(const std::function<double()>& f, Matrix& m,
                                 int r, int c, double h) {
  const double saved = m(r, c);
  m(r, c) = saved + h;
  const double plus = f();
  m(r, c) = saved - h;
  const double minus = f();
  m(r, c) = saved;
  return (plus - minus) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-4});
}

// Small random graph with features, labels in [0, classes) and a train
// split holding the first `train` nodes.
inline Graph random_graph(int n, int classes, int dim, double p_edge, Rng& rng,
                          int train = 2) {
  std::bernoulli_distribution coin(p_edge);
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng)) edges.push_back({i, j});
    }
  }
  std::vector<int> labels(n);
  for (int& y : labels) y = label(rng);
  Splits s;
  for (int i = 0; i < n; ++i) {
    if (i < train) {
      s.train.push_back(i);
    } else if (i < train + (n - train) / 2) {
      s.val.push_back(i);
    } else {
      s.test.push_back(i);
    }
  }
  return Graph(n, classes, edges, random_matrix(n, dim, rng), labels, s);
}

}  // namespace gdamn::oracle

#endif  // GDAMN_TESTS_ORACLES_H_
