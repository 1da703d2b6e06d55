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

// EM training: Q pretraining with an entropy regularizer, then alternating
// M-steps (train P on reconstruction + structure KL + entropy) and E-steps
// (train Q on labels and the S-sample marginal of P under stable weights).
// Final predictions always come from Q.

#ifndef GDAMN_TRAINER_H_
#define GDAMN_TRAINER_H_

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gdamn/attention.h"
#include "gdamn/gnn.h"
#include "gdamn/graph.h"
#include "gdamn/optim.h"

namespace gdamn {

struct Hyperparams {
  double beta = 0.6;     // entropy weight in the M-step
  double lambda = 0.8;   // unlabeled weight in the E-step
  double gamma = 0.5;    // entropy weight during Q pretraining
  double tau = 1.0;      // Gumbel temperature
  int samples = 5;       // S for the E-step marginal
  double lr = 0.05;
  double weight_decay = 5e-4;        // pretraining and first EM iteration
  double weight_decay_later = 5e-4;  // later EM iterations
  double dropout = 0.5;
  double attention_dropout = 0.2;
  int hidden = 32;
  int epochs = 200;  // per phase
  int em_iterations = 2;
  bool use_hard = true;
  bool use_soft = true;
  // 0: E-step weights from stable fusion. S >= 1: hard probabilities in the
  // fusion replaced by the average of S sampled structures.
  int stable_samples = 0;

  // Throws ConfigError naming the first invalid field.
  void validate() const;
  std::map<std::string, std::string> to_map() const;
  // Unknown keys throw ConfigError; missing keys keep their defaults.
  static Hyperparams from_map(const std::map<std::string, std::string>& kv,
                              Hyperparams base);
  static Hyperparams from_map(const std::map<std::string, std::string>& kv);
};

// Flat key=value files; '#' starts a comment.
std::map<std::string, std::string> read_key_values(const std::string& path);
void write_key_values(const std::string& path,
                      const std::map<std::string, std::string>& kv);

struct EpochRecord {
  std::string phase;  // "pretrain", "m", "e", "gcn"
  int em_iteration = 0;
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

enum class Phase { kInit, kPretrain, kM, kE };

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<int>& nodes);

// Mean cross-entropy of log-softmax rows against target distributions.
Tensor soft_cross_entropy(const Tensor& log_probs, const Matrix& targets);
// Mean entropy of softmax rows.
Tensor mean_entropy(const Tensor& log_probs);

// M-step objective: mean CE(y_hat, P) over all nodes + KL(hard || prior) / n
// + beta * mean entropy(P).
struct MStepLoss {
  Tensor total;
  Tensor reconstruction;
  Tensor kl;
  Tensor entropy;
  PForward forward;
};
MStepLoss m_step_loss(Tape& tape, PNetwork& p, const Graph& g,
                      const Matrix& y_hat, const Vector& prior,
                      const Hyperparams& hp, Rng& rng, StructureMode mode,
                      bool training);

// E-step objective: mean labeled CE + lambda * mean CE(targets, Q) over
// unlabeled nodes, Q run under `weights`.
Tensor e_step_loss(Tape& tape, QNetwork& q, const Graph& g,
                   const Vector& weights, const Matrix& targets,
                   const Hyperparams& hp, Rng& rng, bool training);

class Trainer {
 public:
  Trainer(const Graph& g, Hyperparams hp, std::uint64_t seed);

  void pretrain_q();
  void m_step();
  void e_step();
  // pretrain -> em_iterations x (M, E).
  void run();

  // Q predictions under the current E-step weights (Laplacian before the
  // first E-step).
  Matrix predict();
  double test_accuracy();

  const Graph& graph() const { return g_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const LabelState& labels() const { return labels_; }
  const Vector& q_weights() const { return q_weights_; }
  const Vector& prior() const { return prior_; }
  Phase phase() const { return phase_; }
  int em_iteration() const { return em_iteration_; }
  const std::vector<EpochRecord>& history() const { return history_; }
  PNetwork& p() { return p_; }
  QNetwork& q() { return q_; }

  // Average of P's softmax over `samples` hard structure samples, without
  // dropout.
  Matrix p_marginal(int samples, Rng& rng);

 private:
  Rng phase_rng(const std::string& tag) const;
  double current_weight_decay() const;
  POptions p_options(StructureMode mode) const;
  Matrix q_probs();
  Vector e_step_weights(Rng& rng);

  Graph g_;
  Hyperparams hp_;
  std::uint64_t seed_;
  PNetwork p_;
  QNetwork q_;
  LabelState labels_;
  Vector q_weights_;
  Vector prior_;
  Phase phase_ = Phase::kInit;
  int em_iteration_ = 0;
  std::vector<EpochRecord> history_;
};

struct GcnRun {
  double test_acc = 0.0;
  double val_acc = 0.0;
  std::vector<EpochRecord> history;
};

// Vanilla GCN on fixed entry weights: labeled CE (+ gamma * entropy when
// gamma > 0), best-validation checkpoint, hp.epochs epochs.
GcnRun train_gcn(const Graph& g, const Vector& weights, const Hyperparams& hp,
                 std::uint64_t seed, double gamma = 0.0);

}  // namespace gdamn

#endif  // GDAMN_TRAINER_H_
