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

#include "gdamn/tensor.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "gdamn/errors.h"

namespace gdamn {
namespace {

std::uint64_t next_generation() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool is_scalar(const Matrix& m) { return m.rows() == 1 && m.cols() == 1; }

Tape& common_tape(const Tensor& a, const Tensor& b) {
  if (&a.tape() != &b.tape()) {
    throw TapeError("operands recorded on different tapes");
  }
  return a.tape();
}

enum class Broadcast { kSame, kLeftScalar, kRightScalar };

Broadcast broadcast_of(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (is_scalar(a)) return Broadcast::kLeftScalar;
  if (is_scalar(b)) return Broadcast::kRightScalar;
  throw DimensionError(std::string(op) + ": shape mismatch " + shape(a) +
                       " vs " + shape(b));
}

// Adds `g` (result-shaped) into the gradient of `id`, summing when `id` was
// broadcast from a scalar.
void accumulate(Tape& tape, int id, const Matrix& g) {
  if (!tape.requires_grad(id)) return;
  Matrix& acc = tape.grad_accumulator(id);
  if (acc.rows() == g.rows() && acc.cols() == g.cols()) {
    acc += g;
  } else {
    acc(0, 0) += g.sum();
  }
}

Matrix broadcast_to(const Matrix& m, const Matrix& like) {
  if (m.rows() == like.rows() && m.cols() == like.cols()) return m;
  return Matrix::Constant(like.rows(), like.cols(), m(0, 0));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Parameter::Parameter(std::string name, Matrix value)
    : name_(std::move(name)),
      value_(std::move(value)),
      grad_(Matrix::Zero(value_.rows(), value_.cols())) {}

const Matrix& Tensor::value() const {
  tape().check(*this);
  return tape_->value(id_);
}

const Matrix& Tensor::grad() const {
  tape().check(*this);
  return tape_->grad(id_);
}

bool Tensor::requires_grad() const {
  tape().check(*this);
  return tape_->requires_grad(id_);
}

double Tensor::item() const {
  const Matrix& v = value();
  if (!is_scalar(v)) {
    throw DimensionError("item() on a " + shape(v) + " tensor");
  }
  return v(0, 0);
}

Tape& Tensor::tape() const {
  if (tape_ == nullptr) throw TapeError("tensor is not attached to a tape");
  return *tape_;
}

Tape::Tape() : generation_(next_generation()) {}

Tensor Tape::constant(Matrix value) {
  return record(std::move(value), false, nullptr);
}

Tensor Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr, nullptr});
  return Tensor(this, static_cast<int>(nodes_.size()) - 1, generation_);
}

Tensor Tape::parameter(Parameter& param) {
  nodes_.push_back(Node{param.value(), Matrix(), true, &param, nullptr});
  return Tensor(this, static_cast<int>(nodes_.size()) - 1, generation_);
}

Tensor Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1, generation_);
}

Matrix& Tape::grad_accumulator(int id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0) {
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  }
  return node.grad;
}

void Tape::check(const Tensor& t) const {
  if (t.tape_ != this || t.generation_ != generation_ || t.id_ < 0 ||
      t.id_ >= static_cast<int>(nodes_.size())) {
    throw TapeError("tensor is detached from this tape (cleared or foreign)");
  }
}

void Tape::backward(const Tensor& loss) {
  check(loss);
  if (!is_scalar(nodes_[loss.id_].value)) {
    throw DimensionError("backward() needs a 1x1 loss, got " +
                         shape(nodes_[loss.id_].value));
  }
  if (!nodes_[loss.id_].requires_grad) {
    throw TapeError("loss does not depend on any differentiable input");
  }
  for (Node& node : nodes_) node.grad.resize(0, 0);
  grad_accumulator(loss.id_)(0, 0) = 1.0;
  for (int id = loss.id_; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0) continue;
    if (node.backward) node.backward(*this, id);
    if (node.param != nullptr) node.param->grad() += node.grad;
  }
}

void Tape::clear() {
  nodes_.clear();
  generation_ = next_generation();
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + shape(av) + " x " + shape(bv));
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(av * bv, a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, int self) {
                       const Matrix& g = t.grad(self);
                       if (t.requires_grad(ia)) {
                         t.grad_accumulator(ia).noalias() +=
                             g * t.value(ib).transpose();
                       }
                       if (t.requires_grad(ib)) {
                         t.grad_accumulator(ib).noalias() +=
                             t.value(ia).transpose() * g;
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  const int ia = a.id();
  return a.tape().record(a.value().transpose(), a.requires_grad(),
                         [ia](Tape& t, int self) {
                           t.grad_accumulator(ia) += t.grad(self).transpose();
                         });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out;
  switch (broadcast_of(av, bv, "add")) {
    case Broadcast::kSame: out = av + bv; break;
    case Broadcast::kLeftScalar: out = bv.array() + av(0, 0); break;
    case Broadcast::kRightScalar: out = av.array() + bv(0, 0); break;
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, int self) {
                       accumulate(t, ia, t.grad(self));
                       accumulate(t, ib, t.grad(self));
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out;
  switch (broadcast_of(av, bv, "sub")) {
    case Broadcast::kSame: out = av - bv; break;
    case Broadcast::kLeftScalar: out = (-bv.array()) + av(0, 0); break;
    case Broadcast::kRightScalar: out = av.array() - bv(0, 0); break;
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib](Tape& t, int self) {
                       accumulate(t, ia, t.grad(self));
                       accumulate(t, ib, -t.grad(self));
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out;
  switch (broadcast_of(av, bv, "mul")) {
    case Broadcast::kSame: out = av.cwiseProduct(bv); break;
    case Broadcast::kLeftScalar: out = bv * av(0, 0); break;
    case Broadcast::kRightScalar: out = av * bv(0, 0); break;
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [ia, ib](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ia)) {
          accumulate(t, ia, g.cwiseProduct(broadcast_to(t.value(ib), g)));
        }
        if (t.requires_grad(ib)) {
          accumulate(t, ib, g.cwiseProduct(broadcast_to(t.value(ia), g)));
        }
      });
}

Tensor scale(const Tensor& a, double factor) {
  const int ia = a.id();
  return a.tape().record(a.value() * factor, a.requires_grad(),
                         [ia, factor](Tape& t, int self) {
                           t.grad_accumulator(ia) += t.grad(self) * factor;
                         });
}

Tensor add_scalar(const Tensor& a, double value) {
  const int ia = a.id();
  return a.tape().record(a.value().array() + value, a.requires_grad(),
                         [ia](Tape& t, int self) {
                           t.grad_accumulator(ia) += t.grad(self);
                         });
}

Tensor add_row(const Tensor& x, const Tensor& b) {
  Tape& tape = common_tape(x, b);
  const Matrix& xv = x.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row: " + shape(xv) + " + " + shape(bv));
  }
  Matrix out = xv.rowwise() + bv.row(0);
  const int ix = x.id(), ib = b.id();
  return tape.record(std::move(out), x.requires_grad() || b.requires_grad(),
                     [ix, ib](Tape& t, int self) {
                       const Matrix& g = t.grad(self);
                       if (t.requires_grad(ix)) t.grad_accumulator(ix) += g;
                       if (t.requires_grad(ib)) {
                         t.grad_accumulator(ib) += g.colwise().sum();
                       }
                     });
}

Tensor mul_row(const Tensor& x, const Tensor& s) {
  Tape& tape = common_tape(x, s);
  const Matrix& xv = x.value();
  const Matrix& sv = s.value();
  if (sv.rows() != 1 || sv.cols() != xv.cols()) {
    throw DimensionError("mul_row: " + shape(xv) + " .* " + shape(sv));
  }
  Matrix out = xv.array().rowwise() * sv.row(0).array();
  const int ix = x.id(), is = s.id();
  return tape.record(
      std::move(out), x.requires_grad() || s.requires_grad(),
      [ix, is](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        if (t.requires_grad(ix)) {
          t.grad_accumulator(ix).array() +=
              g.array().rowwise() * t.value(is).row(0).array();
        }
        if (t.requires_grad(is)) {
          t.grad_accumulator(is) +=
              g.cwiseProduct(t.value(ix)).colwise().sum();
        }
      });
}

Tensor elementwise(Elementwise kind, const Tensor& x, double slope) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  switch (kind) {
    case Elementwise::kSigmoid:
      out = xv.unaryExpr([](double v) { return stable_sigmoid(v); });
      break;
    case Elementwise::kRelu:
      out = xv.cwiseMax(0.0);
      break;
    case Elementwise::kLeakyRelu:
      out = xv.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
      break;
    case Elementwise::kLog:
      if ((xv.array() <= 0.0).any()) {
        throw std::domain_error("log of a non-positive value; clamp first");
      }
      out = xv.array().log();
      break;
    case Elementwise::kExp:
      out = xv.array().exp();
      break;
    case Elementwise::kNeg:
      out = -xv;
      break;
  }
  const int ix = x.id();
  return x.tape().record(
      std::move(out), x.requires_grad(), [ix, kind, slope](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& xv = t.value(ix);
        const Matrix& y = t.value(self);
        Matrix& acc = t.grad_accumulator(ix);
        switch (kind) {
          case Elementwise::kSigmoid:
            acc.array() += g.array() * y.array() * (1.0 - y.array());
            break;
          case Elementwise::kRelu:
            acc.array() += (xv.array() > 0.0).select(g.array(), 0.0);
            break;
          case Elementwise::kLeakyRelu:
            acc.array() +=
                (xv.array() > 0.0).select(g.array(), slope * g.array());
            break;
          case Elementwise::kLog:
            acc.array() += g.array() / xv.array();
            break;
          case Elementwise::kExp:
            acc.array() += g.array() * y.array();
            break;
          case Elementwise::kNeg:
            acc -= g;
            break;
        }
      });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  const int ix = x.id();
  return x.tape().record(
      x.value().cwiseMax(lo).cwiseMin(hi), x.requires_grad(),
      [ix, lo, hi](Tape& t, int self) {
        const auto xv = t.value(ix).array();
        t.grad_accumulator(ix).array() +=
            (xv >= lo && xv <= hi).select(t.grad(self).array(), 0.0);
      });
}

Tensor sum(const Tensor& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  const int ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix](Tape& t, int self) {
                           t.grad_accumulator(ix).array() += t.grad(self)(0, 0);
                         });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.value().size());
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / n);
}

Tensor row_sum(const Tensor& x) {
  const int ix = x.id();
  return x.tape().record(x.value().rowwise().sum(), x.requires_grad(),
                         [ix](Tape& t, int self) {
                           Matrix& acc = t.grad_accumulator(ix);
                           acc.colwise() += t.grad(self).col(0);
                         });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: " + shape(av) + " | " + shape(bv));
  }
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ka = av.cols(), kb = bv.cols();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, ka, kb](Tape& t, int self) {
                       const Matrix& g = t.grad(self);
                       if (t.requires_grad(ia)) {
                         t.grad_accumulator(ia) += g.leftCols(ka);
                       }
                       if (t.requires_grad(ib)) {
                         t.grad_accumulator(ib) += g.rightCols(kb);
                       }
                     });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("concat_rows: " + shape(av) + " / " + shape(bv));
  }
  Matrix out(av.rows() + bv.rows(), av.cols());
  out << av, bv;
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ra = av.rows(), rb = bv.rows();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [ia, ib, ra, rb](Tape& t, int self) {
                       const Matrix& g = t.grad(self);
                       if (t.requires_grad(ia)) {
                         t.grad_accumulator(ia) += g.topRows(ra);
                       }
                       if (t.requires_grad(ib)) {
                         t.grad_accumulator(ib) += g.bottomRows(rb);
                       }
                     });
}

Tensor gather_rows(const Tensor& x, std::vector<int> index) {
  const Matrix& xv = x.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] < 0 || index[r] >= xv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(index[r]) +
                           " outside " + shape(xv));
    }
    out.row(static_cast<Eigen::Index>(r)) = xv.row(index[r]);
  }
  const int ix = x.id();
  return x.tape().record(
      std::move(out), x.requires_grad(),
      [ix, index = std::move(index)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        Matrix& acc = t.grad_accumulator(ix);
        for (std::size_t r = 0; r < index.size(); ++r) {
          acc.row(index[r]) += g.row(static_cast<Eigen::Index>(r));
        }
      });
}

Tensor normalize_rows(const Tensor& x, double eps) {
  const Matrix& xv = x.value();
  Vector norms = xv.rowwise().norm();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    out.row(i) = xv.row(i) / std::max(norms(i), eps);
  }
  const int ix = x.id();
  return x.tape().record(
      std::move(out), x.requires_grad(),
      [ix, eps, norms = std::move(norms)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        Matrix& acc = t.grad_accumulator(ix);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          if (norms(i) > eps) {
            const double proj = y.row(i).dot(g.row(i));
            acc.row(i) += (g.row(i) - proj * y.row(i)) / norms(i);
          } else {
            acc.row(i) += g.row(i) / eps;
          }
        }
      });
}

Tensor log_softmax_rows(const Tensor& x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    const double lse = m + std::log((xv.row(i).array() - m).exp().sum());
    out.row(i) = xv.row(i).array() - lse;
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix](Tape& t, int self) {
                           const Matrix& g = t.grad(self);
                           const Matrix p = t.value(self).array().exp();
                           Matrix& acc = t.grad_accumulator(ix);
                           const Vector gs = g.rowwise().sum();
                           acc += g;
                           acc -= (p.array().colwise() * gs.array()).matrix();
                         });
}

Tensor softmax_rows(const Tensor& x) {
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double m = xv.row(i).maxCoeff();
    auto e = (xv.row(i).array() - m).exp();
    out.row(i) = e / e.sum();
  }
  const int ix = x.id();
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix](Tape& t, int self) {
                           const Matrix& g = t.grad(self);
                           const Matrix& y = t.value(self);
                           const Vector dot = g.cwiseProduct(y).rowwise().sum();
                           t.grad_accumulator(ix).array() +=
                               y.array() * (g.array().colwise() - dot.array());
                         });
}

Tensor rowwise_softmax_masked(const Tensor& scores, const Matrix& mask) {
  const Matrix& sv = scores.value();
  if (sv.rows() != mask.rows() || sv.cols() != mask.cols()) {
    throw DimensionError("rowwise_softmax_masked: scores " + shape(sv) +
                         " vs mask " + shape(mask));
  }
  Matrix out = Matrix::Zero(sv.rows(), sv.cols());
  for (Eigen::Index i = 0; i < sv.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < sv.cols(); ++j) {
      if (mask(i, j) != 0.0) m = std::max(m, sv(i, j));
    }
    if (!std::isfinite(m)) {
      throw DegenerateRowError("rowwise_softmax_masked: row " +
                               std::to_string(i) + " has an empty mask");
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < sv.cols(); ++j) {
      if (mask(i, j) != 0.0) {
        out(i, j) = std::exp(sv(i, j) - m);
        z += out(i, j);
      }
    }
    out.row(i) /= z;
  }
  const int is = scores.id();
  return scores.tape().record(
      std::move(out), scores.requires_grad(), [is](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        const Vector dot = g.cwiseProduct(y).rowwise().sum();
        t.grad_accumulator(is).array() +=
            y.array() * (g.array().colwise() - dot.array());
      });
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout rate must lie in [0, 1)");
  }
  if (!training || rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::bernoulli_distribution coin(keep);
  const Matrix& xv = x.value();
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = coin(rng) ? 1.0 / keep : 0.0;
    }
  }
  const int ix = x.id();
  Matrix out = xv.cwiseProduct(mask);
  return x.tape().record(std::move(out), x.requires_grad(),
                         [ix, mask = std::move(mask)](Tape& t, int self) {
                           t.grad_accumulator(ix) +=
                               t.grad(self).cwiseProduct(mask);
                         });
}

Tensor straight_through(const Tensor& relaxed, const Matrix& hard) {
  const Matrix& rv = relaxed.value();
  if (rv.rows() != hard.rows() || rv.cols() != hard.cols()) {
    throw DimensionError("straight_through: " + shape(rv) + " vs " +
                         shape(hard));
  }
  const int ir = relaxed.id();
  return relaxed.tape().record(hard, relaxed.requires_grad(),
                               [ir](Tape& t, int self) {
                                 t.grad_accumulator(ir) += t.grad(self);
                               });
}

Tensor segment_softmax(std::shared_ptr<const SparsePattern> pattern,
                       const Tensor& scores, const Tensor& weights) {
  Tape& tape = common_tape(scores, weights);
  const Matrix& sv = scores.value();
  const Matrix& wv = weights.value();
  const int nnz = pattern->nnz();
  if (sv.rows() != nnz || sv.cols() != 1 || wv.rows() != nnz ||
      wv.cols() != 1) {
    throw DimensionError("segment_softmax: expected " + std::to_string(nnz) +
                         "x1 scores/weights, got " + shape(sv) + " and " +
                         shape(wv));
  }
  Matrix out(nnz, 1);
  // exp(s_k - max) / Z, needed for the weight gradient.
  Vector scaled(nnz);
  for (int i = 0; i < pattern->rows(); ++i) {
    const int begin = pattern->row_ptr[i], end = pattern->row_ptr[i + 1];
    double m = -std::numeric_limits<double>::infinity();
    for (int k = begin; k < end; ++k) m = std::max(m, sv(k, 0));
    double z = 0.0;
    for (int k = begin; k < end; ++k) {
      scaled(k) = std::exp(sv(k, 0) - m);
      z += wv(k, 0) * scaled(k);
    }
    if (!(z > 0.0)) {
      throw DegenerateRowError("segment_softmax: row " + std::to_string(i) +
                               " has zero total weight");
    }
    for (int k = begin; k < end; ++k) {
      scaled(k) /= z;
      out(k, 0) = wv(k, 0) * scaled(k);
    }
  }
  const int is = scores.id(), iw = weights.id();
  return tape.record(
      std::move(out), scores.requires_grad() || weights.requires_grad(),
      [is, iw, pattern = std::move(pattern), scaled = std::move(scaled)](
          Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& y = t.value(self);
        const bool ds = t.requires_grad(is), dw = t.requires_grad(iw);
        Matrix* gs = ds ? &t.grad_accumulator(is) : nullptr;
        Matrix* gw = dw ? &t.grad_accumulator(iw) : nullptr;
        for (int i = 0; i < pattern->rows(); ++i) {
          const int begin = pattern->row_ptr[i], end = pattern->row_ptr[i + 1];
          double avg = 0.0;
          for (int k = begin; k < end; ++k) avg += g(k, 0) * y(k, 0);
          for (int k = begin; k < end; ++k) {
            const double centered = g(k, 0) - avg;
            if (ds) (*gs)(k, 0) += y(k, 0) * centered;
            if (dw) (*gw)(k, 0) += scaled(k) * centered;
          }
        }
      });
}

Tensor sddmm(std::shared_ptr<const SparsePattern> pattern, const Tensor& a,
             const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols() || av.rows() < pattern->rows()) {
    throw DimensionError("sddmm: operands " + shape(av) + " and " + shape(bv));
  }
  for (int c : pattern->col) {
    if (c < 0 || c >= bv.rows()) {
      throw DimensionError("sddmm: column " + std::to_string(c) +
                           " outside operand " + shape(bv));
    }
  }
  Matrix out(pattern->nnz(), 1);
  for (int i = 0; i < pattern->rows(); ++i) {
    for (int k = pattern->row_ptr[i]; k < pattern->row_ptr[i + 1]; ++k) {
      out(k, 0) = av.row(i).dot(bv.row(pattern->col[k]));
    }
  }
  const int ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [ia, ib, pattern = std::move(pattern)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& av = t.value(ia);
        const Matrix& bv = t.value(ib);
        const bool da = t.requires_grad(ia), db = t.requires_grad(ib);
        Matrix* ga = da ? &t.grad_accumulator(ia) : nullptr;
        Matrix* gb = db ? &t.grad_accumulator(ib) : nullptr;
        for (int i = 0; i < pattern->rows(); ++i) {
          for (int k = pattern->row_ptr[i]; k < pattern->row_ptr[i + 1]; ++k) {
            const int c = pattern->col[k];
            if (da) ga->row(i) += g(k, 0) * bv.row(c);
            if (db) gb->row(c) += g(k, 0) * av.row(i);
          }
        }
      });
}

Tensor spmm(std::shared_ptr<const SparsePattern> pattern, const Tensor& values,
            const Tensor& h) {
  Tape& tape = common_tape(values, h);
  const Matrix& vv = values.value();
  const Matrix& hv = h.value();
  const int nnz = pattern->nnz();
  if (vv.rows() != nnz || vv.cols() != 1) {
    throw DimensionError("spmm: expected " + std::to_string(nnz) +
                         "x1 values, got " + shape(vv));
  }
  for (int c : pattern->col) {
    if (c < 0 || c >= hv.rows()) {
      throw DimensionError("spmm: column " + std::to_string(c) +
                           " outside operand " + shape(hv));
    }
  }
  Matrix out = Matrix::Zero(pattern->rows(), hv.cols());
  for (int i = 0; i < pattern->rows(); ++i) {
    for (int k = pattern->row_ptr[i]; k < pattern->row_ptr[i + 1]; ++k) {
      out.row(i) += vv(k, 0) * hv.row(pattern->col[k]);
    }
  }
  const int iv = values.id(), ih = h.id();
  return tape.record(
      std::move(out), values.requires_grad() || h.requires_grad(),
      [iv, ih, pattern = std::move(pattern)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& hv = t.value(ih);
        const Matrix& vv = t.value(iv);
        const bool dv = t.requires_grad(iv), dh = t.requires_grad(ih);
        Matrix* gv = dv ? &t.grad_accumulator(iv) : nullptr;
        Matrix* gh = dh ? &t.grad_accumulator(ih) : nullptr;
        for (int i = 0; i < pattern->rows(); ++i) {
          for (int k = pattern->row_ptr[i]; k < pattern->row_ptr[i + 1]; ++k) {
            const int c = pattern->col[k];
            if (dv) (*gv)(k, 0) += g.row(i).dot(hv.row(c));
            if (dh) gh->row(c) += vv(k, 0) * g.row(i);
          }
        }
      });
}

}  // namespace gdamn
