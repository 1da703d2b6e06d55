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

#include "gdamn/attention.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gdamn/errors.h"
#include "gdamn/optim.h"

namespace gdamn {
namespace {

std::vector<int> edge_endpoints(const Graph& g, bool first) {
  std::vector<int> out;
  out.reserve(g.edges().size());
  for (const Edge& e : g.edges()) out.push_back(first ? e.u : e.v);
  return out;
}

// g1 - g2 for two independent standard Gumbel draws.
double gumbel_difference(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto gumbel = [&]() {
    const double u = std::max(unit(rng), std::numeric_limits<double>::min());
    return -std::log(-std::log(u));
  };
  const double g1 = gumbel();
  return g1 - gumbel();
}

double clamp_prob(double p) { return std::clamp(p, kEpsilon, 1.0 - kEpsilon); }

}  // namespace

LabelState LabelState::from_predictions(const Graph& g, const Matrix& probs) {
  if (probs.rows() != g.n_nodes() || probs.cols() != g.num_classes()) {
    throw DimensionError("label state needs an n x C matrix");
  }
  LabelState s;
  s.y_hat = probs;
  s.labeled.assign(g.n_nodes(), 0);
  for (int i : g.splits().train) {
    s.labeled[i] = 1;
    s.y_hat.row(i).setZero();
    s.y_hat(i, g.labels()[i]) = 1.0;
  }
  return s;
}

double LabelState::max_row_error() const {
  if (y_hat.rows() == 0) return 0.0;
  return (y_hat.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

AttentionParams::AttentionParams(int classes, int feature_dim, int proj_dim,
                                 double temperature_in, Rng& rng)
    : metric("attention.metric", Matrix::Identity(classes, classes)),
      projection("attention.projection",
                 kaiming_uniform(feature_dim, proj_dim, rng)),
      rescale("attention.rescale", Matrix::Ones(1, proj_dim)),
      temperature(temperature_in) {
  if (proj_dim > feature_dim) {
    throw ConfigError("hidden", "projection width " + std::to_string(proj_dim) +
                                    " exceeds feature width " +
                                    std::to_string(feature_dim));
  }
  if (!(temperature > 0.0)) throw ConfigError("tau", "must be positive");
}

std::vector<Parameter*> AttentionParams::parameters() {
  return {&metric, &projection, &rescale};
}

Tensor hard_attention_probs(const Graph& g, const Tensor& y_hat,
                            const Tensor& metric) {
  const Tensor yu = gather_rows(y_hat, edge_endpoints(g, true));
  const Tensor yv = gather_rows(y_hat, edge_endpoints(g, false));
  const Tensor forward = row_sum(mul(matmul(yu, metric), yv));
  const Tensor backward = row_sum(mul(matmul(yv, metric), yu));
  return sigmoid(scale(add(forward, backward), 0.5));
}

Vector hard_attention_probs(const Graph& g, const Matrix& y_hat,
                            const Matrix& metric) {
  Tape tape;
  return hard_attention_probs(g, tape.constant(y_hat), tape.constant(metric))
      .value()
      .col(0);
}

Vector structure_prior(const Graph& g, const Matrix& y_hat) {
  Vector prior(g.n_edges());
  for (int e = 0; e < g.n_edges(); ++e) {
    const auto a = y_hat.row(g.edges()[e].u);
    const auto b = y_hat.row(g.edges()[e].v);
    const double denom = a.norm() * b.norm();
    const double cos = denom > 0.0 ? a.dot(b) / denom : 0.0;
    prior(e) = clamp_prob(cos);
  }
  return prior;
}

Tensor kl_bernoulli(const Tensor& posterior, const Vector& prior) {
  if (posterior.rows() != prior.size() || posterior.cols() != 1) {
    throw DimensionError("kl_bernoulli: posterior and prior supports differ");
  }
  Tape& tape = posterior.tape();
  const Vector p = prior.unaryExpr([](double v) { return clamp_prob(v); });
  const Tensor log_p = tape.constant(p.array().log().matrix());
  const Tensor log_1p = tape.constant((1.0 - p.array()).log().matrix());
  const Tensor q = clamp(posterior, kEpsilon, 1.0 - kEpsilon);
  const Tensor one_minus_q = add_scalar(neg(q), 1.0);
  const Tensor exist = mul(q, sub(log(q), log_p));
  const Tensor absent = mul(one_minus_q, sub(log(one_minus_q), log_1p));
  return sum(add(exist, absent));
}

double kl_bernoulli(const Vector& posterior, const Vector& prior) {
  if (posterior.size() != prior.size()) {
    throw DimensionError("kl_bernoulli: posterior and prior supports differ");
  }
  double total = 0.0;
  for (Eigen::Index e = 0; e < posterior.size(); ++e) {
    const double q = clamp_prob(posterior(e));
    const double p = clamp_prob(prior(e));
    total += q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
  }
  return total;
}

Tensor gumbel_sample_structure(const Tensor& probs, double tau, Rng& rng,
                               bool hard) {
  if (!(tau > 0.0)) throw ConfigError("tau", "must be positive");
  Tape& tape = probs.tape();
  Matrix noise(probs.rows(), 1);
  for (Eigen::Index e = 0; e < noise.rows(); ++e) {
    noise(e, 0) = gumbel_difference(rng);
  }
  const Tensor q = clamp(probs, kEpsilon, 1.0 - kEpsilon);
  const Tensor logit = sub(log(q), log(add_scalar(neg(q), 1.0)));
  const Tensor relaxed =
      sigmoid(scale(add(logit, tape.constant(std::move(noise))), 1.0 / tau));
  if (!hard) return relaxed;
  const Matrix binary =
      (relaxed.value().array() > 0.5).cast<double>().matrix();
  return straight_through(relaxed, binary);
}

Vector gumbel_sample_structure(const Vector& probs, double tau,
                               std::uint64_t seed, bool hard) {
  if (!(tau > 0.0)) throw ConfigError("tau", "must be positive");
  Rng rng(seed);
  Vector out(probs.size());
  for (Eigen::Index e = 0; e < probs.size(); ++e) {
    const double q = clamp_prob(probs(e));
    const double z = (std::log(q) - std::log(1.0 - q) + gumbel_difference(rng)) / tau;
    const double relaxed = 1.0 / (1.0 + std::exp(-z));
    out(e) = hard ? (relaxed > 0.5 ? 1.0 : 0.0) : relaxed;
  }
  return out;
}

Tensor edges_to_entries(const Graph& g, const Tensor& edge_values,
                        double self_value) {
  if (edge_values.rows() != g.n_edges() || edge_values.cols() != 1) {
    throw DimensionError("edges_to_entries: expected one value per edge");
  }
  Tape& tape = edge_values.tape();
  const Tensor self = tape.constant(Matrix::Constant(1, 1, self_value));
  const Tensor table =
      g.n_edges() == 0 ? self : concat_rows(edge_values, self);
  std::vector<int> index(g.pattern().edge_id);
  for (int& e : index) {
    if (e < 0) e = g.n_edges() == 0 ? 0 : g.n_edges();
  }
  return gather_rows(table, std::move(index));
}

Vector edges_to_entries(const Graph& g, const Vector& edge_values,
                        double self_value) {
  if (edge_values.size() != g.n_edges()) {
    throw DimensionError("edges_to_entries: expected one value per edge");
  }
  const AggregationPattern& p = g.pattern();
  Vector out(p.nnz());
  for (int k = 0; k < p.nnz(); ++k) {
    out(k) = p.edge_id[k] < 0 ? self_value : edge_values(p.edge_id[k]);
  }
  return out;
}

Tensor soft_attention(const Graph& g, const Tensor& support,
                      const Tensor& features, const Tensor& projection,
                      const Tensor& rescale, double dropout, bool training,
                      Rng& rng) {
  const AggregationPattern& p = g.pattern();
  if (support.rows() != p.nnz() || support.cols() != 1) {
    throw DimensionError("soft_attention: support must be nnz x 1");
  }
  const Tensor h =
      normalize_rows(mul_row(relu(matmul(features, projection)), rescale));
  const Tensor cos = sddmm(p.csr, h, h);
  Tensor weights = support;
  if (training && dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - dropout);
    Matrix mask(p.nnz(), 1);
    for (int k = 0; k < p.nnz(); ++k) {
      mask(k, 0) = (p.edge_id[k] < 0 || keep(rng)) ? 1.0 : 0.0;
    }
    weights = mul(support, support.tape().constant(std::move(mask)));
  }
  return segment_softmax(p.csr, neg(cos), weights);
}

Vector soft_attention(const Graph& g, const Matrix& features,
                      const AttentionParams& params) {
  Tape tape;
  Rng unused(0);
  const Tensor out = soft_attention(
      g, tape.constant(Matrix::Ones(g.pattern().nnz(), 1)),
      tape.constant(features), tape.constant(params.projection.value()),
      tape.constant(params.rescale.value()), 0.0, false, unused);
  return out.value().col(0);
}

Vector stable_fusion(const Graph& g, const Vector& hard_probs,
                     const Vector& soft_weights) {
  const AggregationPattern& p = g.pattern();
  if (soft_weights.size() != p.nnz()) {
    throw DimensionError("stable_fusion: soft weights must cover every entry");
  }
  const Vector hard = edges_to_entries(g, hard_probs, 1.0);
  Vector fused = hard.cwiseProduct(soft_weights);
  const SparsePattern& csr = *p.csr;
  for (int i = 0; i < csr.rows(); ++i) {
    const int begin = csr.row_ptr[i], end = csr.row_ptr[i + 1];
    // A row with hard factor 1 everywhere is the soft row itself.
    if ((hard.segment(begin, end - begin).array() == 1.0).all()) continue;
    const double total = fused.segment(begin, end - begin).sum();
    if (total > 0.0) {
      fused.segment(begin, end - begin) /= total;
    } else {
      fused.segment(begin, end - begin).setZero();
      fused(p.self_entry[i]) = 1.0;
    }
  }
  return fused;
}

Vector stable_fusion(const Graph& g, const Matrix& y_hat,
                     const AttentionParams& params) {
  return stable_fusion(g, hard_attention_probs(g, y_hat, params.metric.value()),
                       soft_attention(g, g.features(), params));
}

Connectivity connectivity_strength(const Graph& g, const Vector& entry_weights,
                                   const std::vector<int>& labels,
                                   int classes) {
  const AggregationPattern& p = g.pattern();
  if (entry_weights.size() != p.nnz()) {
    throw DimensionError("connectivity_strength: one weight per entry needed");
  }
  if (static_cast<int>(labels.size()) != g.n_nodes()) {
    throw DimensionError("connectivity_strength: labels must cover all nodes");
  }
  Matrix total = Matrix::Zero(classes, classes);
  Matrix count = Matrix::Zero(classes, classes);
  for (int k = 0; k < p.nnz(); ++k) {
    if (p.edge_id[k] < 0) continue;
    const double w = entry_weights(k);
    if (w < 0.0) {
      throw std::invalid_argument("connectivity_strength: negative weight");
    }
    const int a = labels[p.row[k]], b = labels[p.col(k)];
    total(a, b) += w;
    count(a, b) += 1.0;
  }
  Connectivity c;
  c.total = total + total.transpose();
  const Matrix sym_count = count + count.transpose();
  c.mean = Matrix::Zero(classes, classes);
  for (int a = 0; a < classes; ++a) {
    for (int b = 0; b < classes; ++b) {
      if (sym_count(a, b) > 0.0) c.mean(a, b) = c.total(a, b) / sym_count(a, b);
    }
  }
  auto ratio = [](const Matrix& m) {
    const double diag = m.diagonal().sum();
    const double off = m.sum() - diag;
    return off > 0.0 ? diag / off : std::numeric_limits<double>::infinity();
  };
  c.ratio = ratio(c.mean);
  c.total_ratio = ratio(c.total);
  return c;
}

Vector uniform_weights(const Graph& g) {
  const AggregationPattern& p = g.pattern();
  Vector w(p.nnz());
  for (int k = 0; k < p.nnz(); ++k) w(k) = 1.0 / (g.degree(p.row[k]) + 1.0);
  return w;
}

}  // namespace gdamn
