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

#include "gdamn/optim.h"

#include <cmath>
#include <utility>

#include "gdamn/errors.h"

namespace gdamn {

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, t_);
  const double c2 = 1.0 - std::pow(options_.beta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.grad().allFinite()) {
      throw DivergenceError("non-finite gradient in parameter '" + p.name() +
                            "' at step " + std::to_string(t_));
    }
    Matrix g = p.grad();
    if (options_.weight_decay != 0.0) g += options_.weight_decay * p.value();
    m_[k] = options_.beta1 * m_[k] + (1.0 - options_.beta1) * g;
    v_[k] = options_.beta2 * v_[k] +
            (1.0 - options_.beta2) * g.cwiseProduct(g);
    p.value().array() -= options_.lr * (m_[k].array() / c1) /
                         ((v_[k].array() / c2).sqrt() + options_.eps);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

Matrix kaiming_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = dist(rng);
  }
  return w;
}

}  // namespace gdamn
