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

#include "gdamn/gnn.h"

#include <cmath>
#include <string>

#include "gdamn/errors.h"
#include "gdamn/optim.h"

namespace gdamn {

GcnStack::GcnStack(const std::vector<int>& dims, double dropout, Rng& rng,
                   const std::string& prefix)
    : dropout_(dropout) {
  if (dims.size() < 2) throw ConfigError("layers", "a GCN needs >= 1 layer");
  weights_.reserve(dims.size() - 1);
  biases_.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] < 1 || dims[l + 1] < 1) {
      throw ConfigError("hidden", "layer widths must be positive");
    }
    const std::string tag = prefix + "." + std::to_string(l);
    weights_.emplace_back(tag + ".weight",
                          kaiming_uniform(dims[l], dims[l + 1], rng));
    biases_.emplace_back(tag + ".bias", Matrix::Zero(1, dims[l + 1]));
  }
}

std::vector<Parameter*> GcnStack::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

Tensor gcn_forward(GcnStack& stack, const Graph& g, const Tensor& alpha,
                   const Tensor& inputs, bool training, Rng& rng) {
  if (inputs.cols() != stack.in_dim() || inputs.rows() != g.n_nodes()) {
    throw DimensionError("gcn_forward: inputs must be n x " +
                         std::to_string(stack.in_dim()));
  }
  Tape& tape = inputs.tape();
  const auto& csr = g.pattern().csr;
  Tensor h = inputs;
  for (int l = 0; l < stack.layers(); ++l) {
    const Tensor w = tape.parameter(stack.weight(l));
    const Tensor b = tape.parameter(stack.bias(l));
    // Aggregation and the linear map commute; shrink the width first.
    const Tensor z = stack.weight(l).cols() < stack.weight(l).rows()
                         ? spmm(csr, alpha, matmul(h, w))
                         : matmul(spmm(csr, alpha, h), w);
    h = add_row(z, b);
    if (l + 1 < stack.layers()) {
      h = dropout(relu(h), stack.dropout(), training, rng);
    }
    if (!h.value().allFinite()) {
      throw DivergenceError("non-finite activation in GCN layer " +
                            std::to_string(l));
    }
  }
  return h;
}

QNetwork::QNetwork(int feature_dim, int hidden, int classes, double dropout,
                   Rng& rng)
    : gcn({feature_dim, hidden, classes}, dropout, rng, "q") {}

PNetwork::PNetwork(int classes, int feature_dim, int hidden, double dropout,
                   double temperature, Rng& rng)
    : attention(classes, feature_dim, std::min(hidden, feature_dim),
                temperature, rng),
      gcn({classes + feature_dim, hidden, classes}, dropout, rng, "p") {}

std::vector<Parameter*> PNetwork::parameters() {
  std::vector<Parameter*> out = attention.parameters();
  for (Parameter* p : gcn.parameters()) out.push_back(p);
  return out;
}

PForward p_forward(Tape& tape, PNetwork& p, const Graph& g,
                   const Matrix& y_hat, Rng& rng, bool training,
                   const POptions& options) {
  PForward out;
  const Tensor y = tape.constant(y_hat);
  const Tensor x = tape.constant(g.features());
  if (options.use_hard) {
    out.hard_probs =
        hard_attention_probs(g, y, tape.parameter(p.attention.metric));
    switch (options.mode) {
      case StructureMode::kSampleHard:
        out.sample = gumbel_sample_structure(
            out.hard_probs, p.attention.temperature, rng, true);
        break;
      case StructureMode::kSampleRelaxed:
        out.sample = gumbel_sample_structure(
            out.hard_probs, p.attention.temperature, rng, false);
        break;
      case StructureMode::kExpected:
        out.sample = out.hard_probs;
        break;
    }
  } else {
    out.hard_probs = tape.constant(Matrix::Ones(g.n_edges(), 1));
    out.sample = out.hard_probs;
  }
  out.support = edges_to_entries(g, out.sample, 1.0);
  if (options.use_soft) {
    out.soft = soft_attention(g, out.support, x,
                              tape.parameter(p.attention.projection),
                              tape.parameter(p.attention.rescale),
                              options.attention_dropout, training, rng);
  } else {
    out.soft = segment_softmax(g.pattern().csr,
                               tape.constant(Matrix::Zero(g.pattern().nnz(), 1)),
                               out.support);
  }
  Matrix decoder_input(g.n_nodes(), y_hat.cols() + g.feature_dim());
  decoder_input << y_hat, g.features();
  out.logits = gcn_forward(p.gcn, g, out.soft,
                           tape.constant(std::move(decoder_input)), training,
                           rng);
  return out;
}

Tensor q_forward(Tape& tape, QNetwork& q, const Graph& g,
                 const Vector& weights, bool training, Rng& rng) {
  if (weights.size() != g.pattern().nnz()) {
    throw DimensionError("q_forward: one weight per pattern entry needed");
  }
  return gcn_forward(q.gcn, g, tape.constant(weights),
                     tape.constant(g.features()), training, rng);
}

Vector pr_nr_weights(const Graph& g, const Matrix& features, Relativity mode) {
  const AggregationPattern& p = g.pattern();
  const Vector norms = features.rowwise().norm();
  const double sign = mode == Relativity::kPositive ? 1.0 : -1.0;
  Vector scores(p.nnz());
  for (int k = 0; k < p.nnz(); ++k) {
    const int i = p.row[k], j = p.col(k);
    double cos = 1.0;
    if (i != j) {
      const double denom =
          std::max(norms(i), kEpsilon) * std::max(norms(j), kEpsilon);
      cos = features.row(i).dot(features.row(j)) / denom;
    }
    scores(k) = sign * cos;
  }
  Tape tape;
  return segment_softmax(p.csr, tape.constant(scores),
                         tape.constant(Matrix::Ones(p.nnz(), 1)))
      .value()
      .col(0);
}

}  // namespace gdamn
