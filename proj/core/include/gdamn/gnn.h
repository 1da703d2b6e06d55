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

// GCN propagation and the two networks trained by EM: the label propagator
// P (hard attention -> structure sample -> soft attention -> GCN over
// [Y_hat | X]) and the feature propagator Q (GCN over X).

#ifndef GDAMN_GNN_H_
#define GDAMN_GNN_H_

#include <memory>
#include <vector>

#include "gdamn/attention.h"
#include "gdamn/graph.h"
#include "gdamn/tensor.h"

namespace gdamn {

class GcnStack {
 public:
  // dims = {in, hidden..., out}; one layer per consecutive pair.
  GcnStack(const std::vector<int>& dims, double dropout, Rng& rng,
           const std::string& prefix = "gcn");

  int in_dim() const { return static_cast<int>(weights_.front().rows()); }
  int out_dim() const { return static_cast<int>(weights_.back().cols()); }
  int layers() const { return static_cast<int>(weights_.size()); }
  double dropout() const { return dropout_; }
  Parameter& weight(int l) { return weights_[l]; }
  Parameter& bias(int l) { return biases_[l]; }
  std::vector<Parameter*> parameters();

 private:
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
  double dropout_;
};

// Per layer: m_i = sum_{j in N(i) ∪ i} alpha_ij h_j, h = act(m W + b), ReLU on
// hidden layers, inverted dropout on hidden activations while training, raw
// logits from the last layer. `alpha` is nnz x 1 on g.pattern(). Throws
// DivergenceError naming the layer on a non-finite activation.
Tensor gcn_forward(GcnStack& stack, const Graph& g, const Tensor& alpha,
                   const Tensor& inputs, bool training, Rng& rng);

struct QNetwork {
  GcnStack gcn;
  QNetwork(int feature_dim, int hidden, int classes, double dropout, Rng& rng);
  std::vector<Parameter*> parameters() { return gcn.parameters(); }
};

struct PNetwork {
  AttentionParams attention;
  GcnStack gcn;  // input width C + d
  PNetwork(int classes, int feature_dim, int hidden, double dropout,
           double temperature, Rng& rng);
  std::vector<Parameter*> parameters();
};

enum class StructureMode {
  kSampleHard,     // binary forward, straight-through gradient
  kSampleRelaxed,  // relaxed sample forward and backward
  kExpected,       // hard probabilities used directly as the support
};

struct POptions {
  bool use_hard = true;
  bool use_soft = true;
  StructureMode mode = StructureMode::kSampleHard;
  double attention_dropout = 0.2;
};

struct PForward {
  Tensor logits;      // n x C
  Tensor hard_probs;  // E x 1 (constant ones without hard attention)
  Tensor sample;      // E x 1 structure sample A^hard
  Tensor support;     // nnz x 1 sample expanded with self-loops
  Tensor soft;        // nnz x 1 A^soft
};

// Encode (hard attention), sample, decode (soft attention + GCN). All
// tensors live on `tape`.
PForward p_forward(Tape& tape, PNetwork& p, const Graph& g,
                   const Matrix& y_hat, Rng& rng, bool training,
                   const POptions& options);

// Q logits under entry weights (A^stable, Laplacian, ...).
Tensor q_forward(Tape& tape, QNetwork& q, const Graph& g,
                 const Vector& weights, bool training, Rng& rng);

enum class Relativity { kPositive, kNegative };

// Row softmax of +cos(x_i, x_j) (PR) or -cos(x_i, x_j) (NR) over N(i) ∪ i;
// the self-loop score is +1 (PR) or -1 (NR).
Vector pr_nr_weights(const Graph& g, const Matrix& features, Relativity mode);

}  // namespace gdamn

#endif  // GDAMN_GNN_H_
