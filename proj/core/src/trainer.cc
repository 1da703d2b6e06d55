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

#include "gdamn/trainer.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <system_error>
#include <utility>

#include "gdamn/errors.h"

namespace gdamn {
namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected a number, got '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  int v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key, "expected an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key, "expected true/false, got '" + text + "'");
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<int> complement(int n, const std::vector<int>& nodes) {
  std::vector<char> in(n, 0);
  for (int i : nodes) in[i] = 1;
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (!in[i]) out.push_back(i);
  }
  return out;
}

Matrix rows_of(const Matrix& m, const std::vector<int>& nodes) {
  Matrix out(static_cast<Eigen::Index>(nodes.size()), m.cols());
  for (std::size_t r = 0; r < nodes.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = m.row(nodes[r]);
  }
  return out;
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double cross_entropy_value(const Matrix& logits, const std::vector<int>& labels,
                           const std::vector<int>& nodes) {
  if (nodes.empty()) return 0.0;
  double total = 0.0;
  for (int i : nodes) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits(i, labels[i]);
  }
  return total / static_cast<double>(nodes.size());
}

struct Evaluation {
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
  double test_acc = 0.0;
};

Evaluation evaluate(const Graph& g, const Matrix& logits) {
  Evaluation e;
  e.train_acc = accuracy(logits, g.labels(), g.splits().train);
  e.val_acc = accuracy(logits, g.labels(), g.splits().val);
  e.val_loss = cross_entropy_value(logits, g.labels(), g.splits().val);
  e.test_acc = accuracy(logits, g.labels(), g.splits().test);
  return e;
}

// Adam over `params` for `epochs` steps with best-validation checkpointing
// (ties broken by lower validation loss). Without a validation split the
// final parameters are kept. Returns the evaluation of the kept state.
Evaluation fit(const Graph& g, const std::vector<Parameter*>& params,
               AdamOptions options, int epochs,
               const std::function<Tensor(Tape&)>& loss_fn,
               const std::function<Matrix()>& eval_logits,
               std::vector<EpochRecord>& history, const std::string& phase,
               int em_iteration) {
  Adam adam(params, options);
  const bool select = !g.splits().val.empty();
  std::vector<Matrix> best;
  Evaluation best_eval;
  bool have_best = false;
  Tape tape;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    tape.clear();
    adam.zero_grad();
    const Tensor loss = loss_fn(tape);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      throw DivergenceError("non-finite " + phase + " loss at epoch " +
                            std::to_string(epoch));
    }
    tape.backward(loss);
    adam.step();
    const Evaluation e = evaluate(g, eval_logits());
    history.push_back({phase, em_iteration, epoch, value, e.train_acc, e.val_acc,
                       e.test_acc});
    const bool better =
        !have_best || e.val_acc > best_eval.val_acc ||
        (e.val_acc == best_eval.val_acc && e.val_loss < best_eval.val_loss);
    if (select && better) {
      best.clear();
      for (const Parameter* p : params) best.push_back(p->value());
      best_eval = e;
      have_best = true;
    }
  }
  if (select && have_best) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      params[k]->value() = best[k];
    }
    return best_eval;
  }
  return evaluate(g, eval_logits());
}

}  // namespace

void Hyperparams::validate() const {
  auto non_negative = [](const char* field, double v) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(field, "must be a finite value >= 0");
    }
  };
  auto rate = [](const char* field, double v) {
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError(field, "must lie in [0, 1)");
  };
  non_negative("beta", beta);
  non_negative("lambda", lambda);
  non_negative("gamma", gamma);
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("tau", "must be > 0");
  }
  if (samples < 1) throw ConfigError("samples", "must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be > 0");
  non_negative("weight_decay", weight_decay);
  non_negative("weight_decay_later", weight_decay_later);
  rate("dropout", dropout);
  rate("attention_dropout", attention_dropout);
  if (hidden < 1) throw ConfigError("hidden", "must be >= 1");
  if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
  if (em_iterations < 0) throw ConfigError("em_iterations", "must be >= 0");
  if (stable_samples < 0) throw ConfigError("stable_samples", "must be >= 0");
}

std::map<std::string, std::string> Hyperparams::to_map() const {
  return {
      {"beta", format_double(beta)},
      {"lambda", format_double(lambda)},
      {"gamma", format_double(gamma)},
      {"tau", format_double(tau)},
      {"samples", std::to_string(samples)},
      {"lr", format_double(lr)},
      {"weight_decay", format_double(weight_decay)},
      {"weight_decay_later", format_double(weight_decay_later)},
      {"dropout", format_double(dropout)},
      {"attention_dropout", format_double(attention_dropout)},
      {"hidden", std::to_string(hidden)},
      {"epochs", std::to_string(epochs)},
      {"em_iterations", std::to_string(em_iterations)},
      {"use_hard", use_hard ? "true" : "false"},
      {"use_soft", use_soft ? "true" : "false"},
      {"stable_samples", std::to_string(stable_samples)},
  };
}

Hyperparams Hyperparams::from_map(const std::map<std::string, std::string>& kv,
                                  Hyperparams hp) {
  for (const auto& [key, value] : kv) {
    if (key == "beta") hp.beta = parse_double(key, value);
    else if (key == "lambda") hp.lambda = parse_double(key, value);
    else if (key == "gamma") hp.gamma = parse_double(key, value);
    else if (key == "tau") hp.tau = parse_double(key, value);
    else if (key == "samples") hp.samples = parse_int(key, value);
    else if (key == "lr") hp.lr = parse_double(key, value);
    else if (key == "weight_decay") hp.weight_decay = parse_double(key, value);
    else if (key == "weight_decay_later") hp.weight_decay_later = parse_double(key, value);
    else if (key == "dropout") hp.dropout = parse_double(key, value);
    else if (key == "attention_dropout") hp.attention_dropout = parse_double(key, value);
    else if (key == "hidden") hp.hidden = parse_int(key, value);
    else if (key == "epochs") hp.epochs = parse_int(key, value);
    else if (key == "em_iterations") hp.em_iterations = parse_int(key, value);
    else if (key == "use_hard") hp.use_hard = parse_bool(key, value);
    else if (key == "use_soft") hp.use_soft = parse_bool(key, value);
    else if (key == "stable_samples") hp.stable_samples = parse_int(key, value);
    else throw ConfigError(key, "unknown hyperparameter");
  }
  return hp;
}

Hyperparams Hyperparams::from_map(
    const std::map<std::string, std::string>& kv) {
  return from_map(kv, Hyperparams());
}

std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config", path + ":" + std::to_string(number) +
                                      ": expected key=value");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_key_values(const std::string& path,
                      const std::map<std::string, std::string>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<int>& nodes) {
  if (nodes.empty()) return 0.0;
  int correct = 0;
  for (int i : nodes) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    correct += static_cast<int>(arg) == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

Tensor soft_cross_entropy(const Tensor& log_probs, const Matrix& targets) {
  const double rows = static_cast<double>(log_probs.rows());
  if (rows == 0) throw DimensionError("cross-entropy over zero rows");
  return scale(sum(mul(log_probs, log_probs.tape().constant(targets))),
               -1.0 / rows);
}

Tensor mean_entropy(const Tensor& log_probs) {
  const double rows = static_cast<double>(log_probs.rows());
  if (rows == 0) throw DimensionError("entropy over zero rows");
  return scale(sum(mul(exp(log_probs), log_probs)), -1.0 / rows);
}

MStepLoss m_step_loss(Tape& tape, PNetwork& p, const Graph& g,
                      const Matrix& y_hat, const Vector& prior,
                      const Hyperparams& hp, Rng& rng, StructureMode mode,
                      bool training) {
  POptions options;
  options.use_hard = hp.use_hard;
  options.use_soft = hp.use_soft;
  options.mode = mode;
  options.attention_dropout = hp.attention_dropout;
  MStepLoss out;
  out.forward = p_forward(tape, p, g, y_hat, rng, training, options);
  const Tensor log_p = log_softmax_rows(out.forward.logits);
  out.reconstruction = soft_cross_entropy(log_p, y_hat);
  out.entropy = mean_entropy(log_p);
  out.kl = hp.use_hard ? kl_bernoulli(out.forward.hard_probs, prior)
                       : tape.constant(Matrix::Zero(1, 1));
  out.total = add(add(out.reconstruction, scale(out.kl, 1.0 / g.n_nodes())),
                  scale(out.entropy, hp.beta));
  return out;
}

Tensor e_step_loss(Tape& tape, QNetwork& q, const Graph& g,
                   const Vector& weights, const Matrix& targets,
                   const Hyperparams& hp, Rng& rng, bool training) {
  const Tensor log_q =
      log_softmax_rows(q_forward(tape, q, g, weights, training, rng));
  const std::vector<int>& train = g.splits().train;
  const Tensor labeled =
      soft_cross_entropy(gather_rows(log_q, train), rows_of(g.one_hot(), train));
  const std::vector<int> unlabeled = complement(g.n_nodes(), train);
  if (unlabeled.empty() || hp.lambda == 0.0) return labeled;
  const Tensor rest = soft_cross_entropy(gather_rows(log_q, unlabeled),
                                         rows_of(targets, unlabeled));
  return add(labeled, scale(rest, hp.lambda));
}

Trainer::Trainer(const Graph& g, Hyperparams hp, std::uint64_t seed)
    : g_(g),
      hp_((hp.validate(), hp)),
      seed_(seed),
      p_([&] {
        Rng rng = phase_rng("init.p");
        return PNetwork(g.num_classes(), g.feature_dim(), hp.hidden,
                        hp.dropout, hp.tau, rng);
      }()),
      q_([&] {
        Rng rng = phase_rng("init.q");
        return QNetwork(g.feature_dim(), hp.hidden, g.num_classes(),
                        hp.dropout, rng);
      }()),
      q_weights_(laplacian_weights(g)) {}

Rng Trainer::phase_rng(const std::string& tag) const {
  const std::uint64_t h = fnv1a(tag);
  std::seed_seq seq{static_cast<std::uint32_t>(seed_),
                    static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

double Trainer::current_weight_decay() const {
  return em_iteration_ == 0 ? hp_.weight_decay : hp_.weight_decay_later;
}

POptions Trainer::p_options(StructureMode mode) const {
  POptions o;
  o.use_hard = hp_.use_hard;
  o.use_soft = hp_.use_soft;
  o.mode = mode;
  o.attention_dropout = hp_.attention_dropout;
  return o;
}

Matrix Trainer::predict() {
  Tape tape;
  Rng unused(0);
  return q_forward(tape, q_, g_, q_weights_, false, unused).value();
}

Matrix Trainer::q_probs() { return softmax(predict()); }

double Trainer::test_accuracy() {
  return accuracy(predict(), g_.labels(), g_.splits().test);
}

void Trainer::pretrain_q() {
  Rng rng = phase_rng("pretrain");
  const std::vector<int>& train = g_.splits().train;
  const Matrix train_targets = rows_of(g_.one_hot(), train);
  const std::vector<int> unlabeled = complement(g_.n_nodes(), train);
  auto loss_fn = [&](Tape& tape) {
    const Tensor log_q =
        log_softmax_rows(q_forward(tape, q_, g_, q_weights_, true, rng));
    Tensor loss = soft_cross_entropy(gather_rows(log_q, train), train_targets);
    if (hp_.gamma > 0.0 && !unlabeled.empty()) {
      loss = add(loss,
                 scale(mean_entropy(gather_rows(log_q, unlabeled)), hp_.gamma));
    }
    return loss;
  };
  fit(g_, q_.parameters(), {hp_.lr, hp_.weight_decay}, hp_.epochs, loss_fn,
      [&] { return predict(); }, history_, "pretrain", 0);
  labels_ = LabelState::from_predictions(g_, q_probs());
  phase_ = Phase::kPretrain;
}

void Trainer::m_step() {
  if (phase_ == Phase::kInit) {
    throw std::logic_error("m_step before pretrain_q");
  }
  Rng rng = phase_rng("m." + std::to_string(em_iteration_));
  labels_ = LabelState::from_predictions(g_, q_probs());
  prior_ = structure_prior(g_, labels_.y_hat);
  auto loss_fn = [&](Tape& tape) {
    return m_step_loss(tape, p_, g_, labels_.y_hat, prior_, hp_, rng,
                       StructureMode::kSampleHard, true)
        .total;
  };
  auto eval_logits = [&] {
    Tape tape;
    Rng unused(0);
    return p_forward(tape, p_, g_, labels_.y_hat, unused, false,
                     p_options(StructureMode::kExpected))
        .logits.value();
  };
  fit(g_, p_.parameters(), {hp_.lr, current_weight_decay()}, hp_.epochs,
      loss_fn, eval_logits, history_, "m", em_iteration_);
  phase_ = Phase::kM;
}

Matrix Trainer::p_marginal(int samples, Rng& rng) {
  Matrix total = Matrix::Zero(g_.n_nodes(), g_.num_classes());
  for (int s = 0; s < samples; ++s) {
    Tape tape;
    total += softmax(p_forward(tape, p_, g_, labels_.y_hat, rng, false,
                               p_options(StructureMode::kSampleHard))
                         .logits.value());
  }
  return total / static_cast<double>(samples);
}

Vector Trainer::e_step_weights(Rng& rng) {
  Vector hard = Vector::Ones(g_.n_edges());
  if (hp_.use_hard) {
    hard = hard_attention_probs(g_, labels_.y_hat, p_.attention.metric.value());
    if (hp_.stable_samples > 0) {
      Vector mean = Vector::Zero(g_.n_edges());
      for (int s = 0; s < hp_.stable_samples; ++s) {
        mean += gumbel_sample_structure(hard, p_.attention.temperature, rng(),
                                        true);
      }
      hard = mean / static_cast<double>(hp_.stable_samples);
    }
  }
  const Vector soft = hp_.use_soft
                          ? soft_attention(g_, g_.features(), p_.attention)
                          : uniform_weights(g_);
  return stable_fusion(g_, hard, soft);
}

void Trainer::e_step() {
  if (phase_ != Phase::kM) throw std::logic_error("e_step without an M-step");
  Rng rng = phase_rng("e." + std::to_string(em_iteration_));
  const Matrix targets = p_marginal(hp_.samples, rng);
  labels_ = LabelState::from_predictions(g_, targets);
  q_weights_ = e_step_weights(rng);
  auto loss_fn = [&](Tape& tape) {
    return e_step_loss(tape, q_, g_, q_weights_, targets, hp_, rng, true);
  };
  fit(g_, q_.parameters(), {hp_.lr, current_weight_decay()}, hp_.epochs,
      loss_fn, [&] { return predict(); }, history_, "e", em_iteration_);
  phase_ = Phase::kE;
}

void Trainer::run() {
  pretrain_q();
  for (em_iteration_ = 0; em_iteration_ < hp_.em_iterations; ++em_iteration_) {
    m_step();
    e_step();
  }
}

GcnRun train_gcn(const Graph& g, const Vector& weights, const Hyperparams& hp,
                 std::uint64_t seed, double gamma) {
  hp.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32), 0x6763u};
  Rng rng(seq);
  QNetwork q(g.feature_dim(), hp.hidden, g.num_classes(), hp.dropout, rng);
  const std::vector<int>& train = g.splits().train;
  const Matrix train_targets = rows_of(g.one_hot(), train);
  const std::vector<int> unlabeled = complement(g.n_nodes(), train);
  auto loss_fn = [&](Tape& tape) {
    const Tensor log_q =
        log_softmax_rows(q_forward(tape, q, g, weights, true, rng));
    Tensor loss = soft_cross_entropy(gather_rows(log_q, train), train_targets);
    if (gamma > 0.0 && !unlabeled.empty()) {
      loss = add(loss, scale(mean_entropy(gather_rows(log_q, unlabeled)), gamma));
    }
    return loss;
  };
  auto eval_logits = [&] {
    Tape tape;
    Rng unused(0);
    return q_forward(tape, q, g, weights, false, unused).value();
  };
  GcnRun run;
  const Evaluation e = fit(g, q.parameters(), {hp.lr, hp.weight_decay},
                           hp.epochs, loss_fn, eval_logits, run.history, "gcn",
                           0);
  run.test_acc = e.test_acc;
  run.val_acc = e.val_acc;
  return run;
}

}  // namespace gdamn
