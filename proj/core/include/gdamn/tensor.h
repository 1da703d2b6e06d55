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

// Tape-based reverse-mode automatic differentiation over dense row-major
// matrices.
//
// Every operation appends a node to a Tape; Tape::backward() replays the
// nodes in reverse record order. Persistent trainable state lives in
// Parameter objects, which are bound to a tape as leaves and receive their
// gradient when backward() reaches them. A tape is meant to be cleared (or
// discarded) between optimizer steps:
//
//   Tape tape;
//   Tensor w = tape.parameter(weights);
//   Tensor loss = sum(mul(w, w));
//   tape.backward(loss);           // weights.grad() == 2 * weights.value()
//
// Graph aggregation is expressed through per-entry tensors aligned with a
// SparsePattern (CSR), so attention weights never materialize as N x N.

#ifndef GDAMN_TENSOR_H_
#define GDAMN_TENSOR_H_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gdamn {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Clamp applied before every log or division on probabilities.
inline constexpr double kEpsilon = 1e-10;

// Persistent trainable matrix with its gradient accumulator.
class Parameter {
 public:
  Parameter(std::string name, Matrix value);

  const std::string& name() const { return name_; }
  Matrix& value() { return value_; }
  const Matrix& value() const { return value_; }
  Matrix& grad() { return grad_; }
  const Matrix& grad() const { return grad_; }
  Eigen::Index rows() const { return value_.rows(); }
  Eigen::Index cols() const { return value_.cols(); }
  Eigen::Index size() const { return value_.size(); }
  void zero_grad() { grad_.setZero(); }

 private:
  std::string name_;
  Matrix value_;
  Matrix grad_;
};

// Compressed sparse rows: entries of row i are [row_ptr[i], row_ptr[i+1]).
struct SparsePattern {
  std::vector<int> row_ptr;
  std::vector<int> col;

  int rows() const { return static_cast<int>(row_ptr.size()) - 1; }
  int nnz() const { return static_cast<int>(col.size()); }
};

class Tape;

// Handle to a node on a Tape. Cheap to copy; invalid once the tape is
// cleared or destroyed.
class Tensor {
 public:
  Tensor() = default;

  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  const Matrix& value() const;
  // Gradient after backward(); zero-sized if nothing reached this node.
  const Matrix& grad() const;
  bool requires_grad() const;
  // Value of a 1x1 tensor.
  double item() const;

  Tape& tape() const;
  int id() const { return id_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
  std::uint64_t generation_ = 0;
};

class Tape {
 public:
  // Accumulates into the gradients of this node's inputs. Called with the
  // tape and the node's own id; the node's gradient is populated.
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  // Differentiable leaf not bound to a Parameter (gradient via grad()).
  Tensor variable(Matrix value);
  // Leaf bound to `param`; backward() adds dLoss/dparam into param.grad().
  Tensor parameter(Parameter& param);

  // Appends an operation result. `backward` is dropped when no input
  // requires a gradient.
  Tensor record(Matrix value, bool requires_grad, BackwardFn backward);

  // Reverse-mode sweep from a 1x1 loss.
  void backward(const Tensor& loss);

  // Drops every node; outstanding tensors become detached.
  void clear();

  std::size_t size() const { return nodes_.size(); }

  // Node access for operation implementations.
  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Zero-initialized on first use.
  Matrix& grad_accumulator(int id);

  // Throws TapeError if `t` does not belong to the live state of this tape.
  void check(const Tensor& t) const;
  std::uint64_t generation() const { return generation_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::uint64_t generation_;
};

// ---------------------------------------------------------------------------
// Dense operations. Binary elementwise ops accept equal shapes, or a 1x1
// operand broadcast against the other.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// x (n x k) + b (1 x k) on every row.
Tensor add_row(const Tensor& x, const Tensor& b);
// x (n x k) .* s (1 x k) on every row.
Tensor mul_row(const Tensor& x, const Tensor& s);

enum class Elementwise { kSigmoid, kRelu, kLeakyRelu, kLog, kExp, kNeg };

// `slope` only matters for kLeakyRelu. kLog throws std::domain_error on a
// non-positive input; clamp first.
Tensor elementwise(Elementwise kind, const Tensor& x, double slope = 0.2);
inline Tensor sigmoid(const Tensor& x) {
  return elementwise(Elementwise::kSigmoid, x);
}
inline Tensor relu(const Tensor& x) { return elementwise(Elementwise::kRelu, x); }
inline Tensor leaky_relu(const Tensor& x, double slope = 0.2) {
  return elementwise(Elementwise::kLeakyRelu, x, slope);
}
inline Tensor log(const Tensor& x) { return elementwise(Elementwise::kLog, x); }
inline Tensor exp(const Tensor& x) { return elementwise(Elementwise::kExp, x); }
inline Tensor neg(const Tensor& x) { return elementwise(Elementwise::kNeg, x); }

// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// n x k -> n x 1
Tensor row_sum(const Tensor& x);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
// out.row(r) = x.row(index[r]); gradient scatters back.
Tensor gather_rows(const Tensor& x, std::vector<int> index);

// x_i / max(||x_i||, eps), row by row.
Tensor normalize_rows(const Tensor& x, double eps = kEpsilon);

Tensor log_softmax_rows(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

// Softmax of each row restricted to entries where mask != 0; other entries
// are exactly 0. Throws DegenerateRowError on an all-zero mask row.
Tensor rowwise_softmax_masked(const Tensor& scores, const Matrix& mask);

// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// Forward value `hard`, gradient routed to `relaxed` unchanged.
Tensor straight_through(const Tensor& relaxed, const Matrix& hard);

// ---------------------------------------------------------------------------
// Sparse-pattern operations. Per-entry tensors are nnz x 1 and follow the
// entry order of the pattern.

// out_k = w_k exp(s_k) / sum_{l in row(k)} w_l exp(s_l), differentiable in
// both scores and weights (w >= 0). Throws DegenerateRowError when a row has
// zero total weight.
Tensor segment_softmax(std::shared_ptr<const SparsePattern> pattern,
                       const Tensor& scores, const Tensor& weights);

// out_k = a.row(i) . b.row(col_k) for every entry k of row i.
Tensor sddmm(std::shared_ptr<const SparsePattern> pattern, const Tensor& a,
             const Tensor& b);

// out.row(i) = sum_{k in row i} values_k * h.row(col_k).
Tensor spmm(std::shared_ptr<const SparsePattern> pattern, const Tensor& values,
            const Tensor& h);

}  // namespace gdamn

#endif  // GDAMN_TENSOR_H_
