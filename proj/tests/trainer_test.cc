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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gdamn/errors.h"
#include "gdamn/trainer.h"
#include "oracles.h"

namespace gdamn {
namespace {

// 4 x 30 nodes, small splits; fast enough for unit tests.
Graph small_sbm(std::uint64_t seed = 0, double noise = 1.0) {
  SbmConfig cfg;
  cfg.nodes_per_block = 30;
  cfg.p_in = 0.2;
  cfg.p_out = 0.03;
  cfg.feature_dim = 8;
  cfg.feature_noise = noise;
  cfg.train_per_class = 4;
  cfg.val_per_class = 8;
  cfg.seed = seed;
  return generate_sbm(cfg);
}

Hyperparams fast(int epochs = 20) {
  Hyperparams hp;
  hp.epochs = epochs;
  hp.hidden = 8;
  return hp;
}

double unlabeled_entropy(const Graph& g, const Matrix& logits) {
  const Matrix logp = oracle::log_softmax(logits);
  std::vector<char> labeled(g.n_nodes(), 0);
  for (int i : g.splits().train) labeled[i] = 1;
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < g.n_nodes(); ++i) {
    if (labeled[i]) continue;
    total -= (logp.row(i).array().exp() * logp.row(i).array()).sum();
    ++count;
  }
  return total / count;
}

TEST(Hyperparams, DefaultsAreValid) {
  const Hyperparams hp;
  EXPECT_NO_THROW(hp.validate());
  EXPECT_EQ(hp.lambda, 0.8);
  EXPECT_EQ(hp.samples, 5);
  EXPECT_EQ(hp.lr, 0.05);
  EXPECT_EQ(hp.em_iterations, 2);
  EXPECT_EQ(hp.epochs, 200);
}

TEST(Hyperparams, ValidateNamesField) {
  auto field_of = [](Hyperparams hp) {
    try {
      hp.validate();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("<none>");
  };
  Hyperparams hp;
  hp.beta = -0.1;
  EXPECT_EQ(field_of(hp), "beta");
  hp = {};
  hp.lambda = -1;
  EXPECT_EQ(field_of(hp), "lambda");
  hp = {};
  hp.gamma = std::nan("");
  EXPECT_EQ(field_of(hp), "gamma");
  hp = {};
  hp.samples = 0;
  EXPECT_EQ(field_of(hp), "samples");
  hp = {};
  hp.tau = 0.0;
  EXPECT_EQ(field_of(hp), "tau");
  hp = {};
  hp.dropout = 1.0;
  EXPECT_EQ(field_of(hp), "dropout");
  hp = {};
  hp.epochs = 0;
  EXPECT_EQ(field_of(hp), "epochs");
  hp = {};
  hp.em_iterations = -1;
  EXPECT_EQ(field_of(hp), "em_iterations");
}

TEST(Hyperparams, MapRoundTripAndErrors) {
  Hyperparams hp;
  hp.beta = 0.2;
  hp.tau = 0.35;
  hp.use_soft = false;
  hp.stable_samples = 3;
  const Hyperparams back = Hyperparams::from_map(hp.to_map());
  EXPECT_EQ(back.to_map(), hp.to_map());
  EXPECT_EQ(Hyperparams::from_map({{"beta", "1"}}).lambda, 0.8);
  EXPECT_THROW(Hyperparams::from_map({{"betta", "1"}}), ConfigError);
  EXPECT_THROW(Hyperparams::from_map({{"samples", "2.5"}}), ConfigError);
  EXPECT_THROW(Hyperparams::from_map({{"use_hard", "yes"}}), ConfigError);
  EXPECT_THROW(Hyperparams::from_map({{"lr", "fast"}}), ConfigError);
}

TEST(Hyperparams, KeyValueFiles) {
  const auto path =
      (std::filesystem::temp_directory_path() / "gdamn_trainer_kv.txt").string();
  write_key_values(path, {{"beta", "0.4"}, {"hidden", "16"}});
  EXPECT_EQ(read_key_values(path),
            (std::map<std::string, std::string>{{"beta", "0.4"}, {"hidden", "16"}}));
  {
    std::ofstream out(path);
    out << "# comment\n  beta = 0.2  # trailing\n\nepochs=5\n";
  }
  const Hyperparams hp = Hyperparams::from_map(read_key_values(path));
  EXPECT_EQ(hp.beta, 0.2);
  EXPECT_EQ(hp.epochs, 5);
  {
    std::ofstream out(path);
    out << "beta 0.2\n";
  }
  EXPECT_THROW(read_key_values(path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(read_key_values(path), ConfigError);
}

TEST(Losses, CrossEntropyAndEntropyMatchOracle) {
  Rng rng(1);
  const Matrix logits = oracle::random_matrix(7, 3, rng, 2.0);
  const Matrix targets = oracle::random_stochastic(7, 3, rng);
  const Matrix logp = oracle::log_softmax(logits);
  Tape tape;
  const Tensor lp = log_softmax_rows(tape.constant(logits));
  EXPECT_NEAR(soft_cross_entropy(lp, targets).item(),
              -(logp.array() * targets.array()).sum() / 7.0, 1e-12);
  const double h = -(logp.array().exp() * logp.array()).sum() / 7.0;
  EXPECT_NEAR(mean_entropy(lp).item(), h, 1e-12);
  EXPECT_GE(h, 0.0);
  EXPECT_LE(h, std::log(3.0));
  EXPECT_EQ(accuracy(Matrix::Identity(3, 3), {0, 1, 0}, {0, 1, 2}), 2.0 / 3.0);
}

TEST(Pretrain, GammaZeroIsPlainLabeledCrossEntropy) {
  const Graph g = small_sbm();
  Hyperparams hp = fast(1);
  hp.gamma = 0.0;
  hp.dropout = 0.0;
  Trainer t(g, hp, 3);
  const Matrix before = oracle::log_softmax(t.predict());
  t.pretrain_q();
  double ce = 0.0;
  for (int i : g.splits().train) ce -= before(i, g.labels()[i]);
  ce /= static_cast<double>(g.splits().train.size());
  ASSERT_EQ(t.history().size(), 1u);
  EXPECT_NEAR(t.history()[0].loss, ce, 1e-12);
}

TEST(Pretrain, LargeGammaSharpensPredictions) {
  // No validation split: both runs keep their final-epoch parameters.
  const Graph sbm = small_sbm();
  Splits splits = sbm.splits();
  splits.test.insert(splits.test.end(), splits.val.begin(), splits.val.end());
  splits.val.clear();
  std::vector<std::pair<int, int>> edges;
  for (const Edge& e : sbm.edges()) edges.push_back({e.u, e.v});
  const Graph g(sbm.n_nodes(), sbm.num_classes(), edges, sbm.features(),
                sbm.labels(), splits);
  Hyperparams hp = fast(60);
  hp.gamma = 0.0;
  Trainer plain(g, hp, 4);
  plain.pretrain_q();
  hp.gamma = 10.0;
  Trainer sharp(g, hp, 4);
  sharp.pretrain_q();
  EXPECT_LT(unlabeled_entropy(g, sharp.predict()), unlabeled_entropy(g, plain.predict()));
}

TEST(Pretrain, SeparableGraphFitsTrainSet) {
  const Graph g = small_sbm(5, 0.1);
  Trainer t(g, fast(200), 5);
  t.pretrain_q();
  EXPECT_EQ(accuracy(t.predict(), g.labels(), g.splits().train), 1.0);
  EXPECT_LT(t.labels().max_row_error(), 1e-9);
  for (int i : g.splits().train) {
    EXPECT_EQ(t.labels().y_hat.row(i), g.one_hot().row(i));
  }
}

TEST(MStep, RegularizersVanish) {
  const Graph g = small_sbm();
  Hyperparams hp = fast();
  hp.beta = 0.0;
  Rng rng(6);
  PNetwork p(4, 8, 8, 0.5, 1.0, rng);
  const Matrix y = LabelState::from_predictions(g, oracle::random_stochastic(120, 4, rng)).y_hat;
  const Vector posterior = hard_attention_probs(g, y, p.attention.metric.value());
  Tape tape;
  const MStepLoss loss =
      m_step_loss(tape, p, g, y, posterior, hp, rng, StructureMode::kExpected, false);
  EXPECT_NEAR(loss.kl.item(), 0.0, 1e-12);
  EXPECT_NEAR(loss.total.item(), loss.reconstruction.item(), 1e-12);
}

TEST(MStep, KlMatchesIndependentRecomputation) {
  const Graph g = small_sbm();
  Trainer t(g, fast(), 7);
  t.pretrain_q();
  const Matrix y = t.labels().y_hat;
  Vector prior(g.n_edges()), posterior(g.n_edges());
  double expect = 0.0;
  for (int e = 0; e < g.n_edges(); ++e) {
    const auto [u, v] = g.edges()[e];
    const double cos =
        std::clamp(oracle::cosine(y.row(u), y.row(v)), kEpsilon, 1.0 - kEpsilon);
    const double score = (y.row(u) * y.row(v).transpose())(0, 0);  // Q = I
    const double q = oracle::sigmoid(score);
    expect += oracle::kl_bernoulli(q, cos);
    prior(e) = cos;
  }
  Tape tape;
  Rng rng(8);
  const MStepLoss loss = m_step_loss(tape, t.p(), g, y, prior, fast(), rng,
                                     StructureMode::kSampleHard, true);
  EXPECT_NEAR(loss.kl.item(), expect, 1e-9 * std::max(1.0, expect));
  EXPECT_GE(loss.kl.item(), 0.0);
  EXPECT_GE(loss.entropy.item(), 0.0);
  EXPECT_LE(loss.entropy.item(), std::log(4.0) + 1e-12);
}

TEST(MStep, LossTrendsDown) {
  const Graph g = small_sbm();
  Trainer t(g, fast(50), 9);
  t.pretrain_q();
  t.m_step();
  std::vector<double> losses;
  for (const EpochRecord& r : t.history()) {
    if (r.phase == "m") losses.push_back(r.loss);
  }
  ASSERT_EQ(losses.size(), 50u);
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_LT(t.labels().max_row_error(), 1e-9);
}

TEST(MStep, RequiresPretraining) {
  Trainer t(small_sbm(), fast(), 1);
  EXPECT_THROW(t.m_step(), std::logic_error);
  EXPECT_THROW(t.e_step(), std::logic_error);
}

TEST(EStep, LambdaZeroIgnoresUnlabeledTargets) {
  const Graph g = small_sbm();
  Hyperparams hp = fast();
  hp.lambda = 0.0;
  Rng rng(10);
  QNetwork q(8, 8, 4, 0.5, rng);
  const Vector w = laplacian_weights(g);
  Tape tape;
  Rng a(1), b(1);
  const double l1 = e_step_loss(tape, q, g, w, oracle::random_stochastic(120, 4, rng),
                                hp, a, true).item();
  const double l2 = e_step_loss(tape, q, g, w, oracle::random_stochastic(120, 4, rng),
                                hp, b, true).item();
  EXPECT_EQ(l1, l2);
  hp.lambda = 0.8;
  Rng c(1), d(1);
  EXPECT_NE(e_step_loss(tape, q, g, w, Matrix::Ones(120, 4) / 4.0, hp, c, true).item(),
            e_step_loss(tape, q, g, w, g.one_hot(), hp, d, true).item());
}

TEST(EStep, MarginalConverges) {
  SbmConfig cfg;
  cfg.nodes_per_block = 10;
  cfg.feature_dim = 8;
  cfg.train_per_class = 2;
  cfg.val_per_class = 2;
  cfg.p_in = 0.4;
  cfg.p_out = 0.1;
  const Graph g = generate_sbm(cfg);
  Trainer t(g, fast(20), 11);
  t.pretrain_q();
  t.m_step();
  Rng a(1), b(2), c(3);
  const Matrix m1 = t.p_marginal(1, c);
  const Matrix m5 = t.p_marginal(5, c);
  EXPECT_GT((m1 - m5).cwiseAbs().maxCoeff(), 0.0);
  const Matrix big_a = t.p_marginal(10000, a);
  const Matrix big_b = t.p_marginal(10000, b);
  EXPECT_LT((big_a - big_b).cwiseAbs().rowwise().sum().maxCoeff(), 0.05);
  EXPECT_LT((big_a.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(EStep, WithoutHardAttentionWeightsAreSoftAttention) {
  const Graph g = small_sbm();
  Hyperparams hp = fast();
  hp.use_hard = false;
  Trainer t(g, hp, 12);
  t.pretrain_q();
  t.m_step();
  t.e_step();
  EXPECT_EQ(t.q_weights(), soft_attention(g, g.features(), t.p().attention));
  EXPECT_LT(t.labels().max_row_error(), 1e-9);
  for (int i : g.splits().train) {
    EXPECT_EQ(t.labels().y_hat.row(i), g.one_hot().row(i));
  }
}

TEST(EStep, StableWeightsAreRowStochasticOnSupport) {
  const Graph g = small_sbm();
  Trainer t(g, fast(), 13);
  t.pretrain_q();
  t.m_step();
  t.e_step();
  const Matrix w = oracle::dense_weights(g, t.q_weights());
  const Matrix a = oracle::adjacency_with_self(g);
  for (int i = 0; i < g.n_nodes(); ++i) {
    EXPECT_NEAR(w.row(i).sum(), 1.0, 1e-9);
    for (int j = 0; j < g.n_nodes(); ++j) {
      EXPECT_GE(w(i, j), 0.0);
      if (a(i, j) == 0.0) EXPECT_EQ(w(i, j), 0.0);
    }
  }
}

TEST(Run, ZeroIterationsIsPretrainedBaseline) {
  const Graph g = small_sbm();
  Hyperparams hp = fast();
  hp.em_iterations = 0;
  Trainer a(g, hp, 14);
  a.run();
  Trainer b(g, hp, 14);
  b.pretrain_q();
  EXPECT_EQ(a.predict(), b.predict());
  EXPECT_EQ(a.q_weights(), laplacian_weights(g));
}

TEST(Run, BitReproducible) {
  const Graph g = small_sbm();
  Trainer a(g, fast(), 15);
  Trainer b(g, fast(), 15);
  a.run();
  b.run();
  ASSERT_EQ(a.history().size(), b.history().size());
  for (std::size_t k = 0; k < a.history().size(); ++k) {
    EXPECT_EQ(a.history()[k].loss, b.history()[k].loss);
  }
  EXPECT_EQ(a.predict(), b.predict());
  EXPECT_EQ(a.q_weights(), b.q_weights());
  Trainer c(g, fast(), 16);
  c.run();
  EXPECT_NE(a.history().back().loss, c.history().back().loss);
}

TEST(Run, PredictionComesFromQ) {
  const Graph g = small_sbm();
  Trainer t(g, fast(), 17);
  t.run();
  Tape tape;
  Rng rng(0);
  EXPECT_EQ(t.predict(), q_forward(tape, t.q(), g, t.q_weights(), false, rng).value());
  EXPECT_EQ(t.test_accuracy(), accuracy(t.predict(), g.labels(), g.splits().test));
  EXPECT_EQ(t.phase(), Phase::kE);
}

TEST(Run, NonFiniteFeaturesAbort) {
  const Graph g = small_sbm();
  Matrix x = g.features();
  x(5, 2) = std::nan("");
  Trainer t(g.with_features(x), fast(), 18);
  EXPECT_THROW(t.pretrain_q(), DivergenceError);
}

TEST(Gcn, TrainsAndCheckpointsBestValidation) {
  const Graph g = small_sbm();
  const GcnRun run = train_gcn(g, laplacian_weights(g), fast(50), 19);
  ASSERT_EQ(run.history.size(), 50u);
  double best = 0.0;
  for (const EpochRecord& r : run.history) best = std::max(best, r.val_acc);
  EXPECT_EQ(run.val_acc, best);
  EXPECT_GT(run.test_acc, 0.5);
}

}  // namespace
}  // namespace gdamn
