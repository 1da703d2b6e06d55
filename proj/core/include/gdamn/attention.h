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

// Decoupled attention: hard attention over pseudo-label distributions,
// the label-similarity structure prior, the Bernoulli KL between them,
// binary-concrete edge sampling, soft attention over projected features and
// the stable fusion used for feature propagation.
//
// Per-edge quantities come in two layouts: "edge" vectors (E x 1, one value
// per undirected edge, index = position in Graph::edges()) and "entry"
// vectors (nnz x 1, aligned with Graph::pattern(), self-loops included).

#ifndef GDAMN_ATTENTION_H_
#define GDAMN_ATTENTION_H_

#include <vector>

#include "gdamn/graph.h"
#include "gdamn/tensor.h"

namespace gdamn {

struct LabelState {
  Matrix y_hat;               // n x C, row-stochastic
  std::vector<char> labeled;  // 1 on the train split

  // Pseudo-labels from `probs` with labeled rows overwritten by ground
  // truth. Throws DimensionError if `probs` is not n x C.
  static LabelState from_predictions(const Graph& g, const Matrix& probs);

  // Max |row sum - 1| (0 for a valid state).
  double max_row_error() const;
};

struct AttentionParams {
  Parameter metric;      // Q, C x C, starts at the identity
  Parameter projection;  // W^proj, d x m
  Parameter rescale;     // s, 1 x m, starts at ones
  double temperature = 1.0;

  AttentionParams(int classes, int feature_dim, int proj_dim,
                  double temperature, Rng& rng);
  std::vector<Parameter*> parameters();
};

// Differentiable hard attention: sigmoid of the symmetrized bilinear score
// (y_u Q y_v + y_v Q y_u) / 2 for every undirected edge. E x 1.
Tensor hard_attention_probs(const Graph& g, const Tensor& y_hat,
                            const Tensor& metric);
// Convenience evaluation outside a training tape.
Vector hard_attention_probs(const Graph& g, const Matrix& y_hat,
                            const Matrix& metric);

// cos(y_u, y_v) per undirected edge, clamped to [eps, 1 - eps]; a zero
// row gives cos = 0.
Vector structure_prior(const Graph& g, const Matrix& y_hat);

// Sum over edges of the Bernoulli KL(q || p). Both sides are clamped to
// [eps, 1 - eps]. Throws DimensionError when the supports differ.
Tensor kl_bernoulli(const Tensor& posterior, const Vector& prior);
double kl_bernoulli(const Vector& posterior, const Vector& prior);

// Binary concrete sample per undirected edge:
//   sigmoid((log p - log(1 - p) + g1 - g2) / tau),  g1, g2 ~ Gumbel(0, 1).
// With `hard`, the forward value is thresholded at 0.5 and the gradient
// flows through the relaxed value.
Tensor gumbel_sample_structure(const Tensor& probs, double tau, Rng& rng,
                               bool hard);
Vector gumbel_sample_structure(const Vector& probs, double tau,
                               std::uint64_t seed, bool hard);

// Edge vector -> entry vector; self-loop entries get `self_value`.
Tensor edges_to_entries(const Graph& g, const Tensor& edge_values,
                        double self_value = 1.0);
Vector edges_to_entries(const Graph& g, const Vector& edge_values,
                        double self_value = 1.0);

// Row softmax of -cos(h_i, h_j), h = s .* ReLU(X W^proj), weighted by the
// entry-level `support` (self-loops must carry weight > 0). During training
// each non-self support entry is dropped with probability `dropout` before
// the rows are renormalized.
Tensor soft_attention(const Graph& g, const Tensor& support,
                      const Tensor& features, const Tensor& projection,
                      const Tensor& rescale, double dropout, bool training,
                      Rng& rng);
// Inference-mode soft attention over the original edges plus self-loops.
Vector soft_attention(const Graph& g, const Matrix& features,
                      const AttentionParams& params);

// Entry weights hard(i, j) * soft(i, j), self-loop hard factor 1, rows
// renormalized to sum 1.
Vector stable_fusion(const Graph& g, const Vector& hard_probs,
                     const Vector& soft_weights);
// Computes both factors from the current pseudo-labels and parameters.
Vector stable_fusion(const Graph& g, const Matrix& y_hat,
                     const AttentionParams& params);

struct Connectivity {
  Matrix mean;    // C x C mean weight per class pair (symmetrized)
  Matrix total;   // C x C summed weight per class pair (symmetrized)
  double ratio;        // sum(diag(mean)) / sum(offdiag(mean)), +inf if 0
  double total_ratio;  // same on `total`
};

// Class-pair statistics of entry weights over non-self entries.
Connectivity connectivity_strength(const Graph& g, const Vector& entry_weights,
                                   const std::vector<int>& labels, int classes);

// Uniform weights 1 / (|N(i)| + 1) over N(i) ∪ {i}.
Vector uniform_weights(const Graph& g);

}  // namespace gdamn

#endif  // GDAMN_ATTENTION_H_
