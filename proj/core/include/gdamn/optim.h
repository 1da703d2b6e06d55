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

#ifndef GDAMN_OPTIM_H_
#define GDAMN_OPTIM_H_

#include <vector>

#include "gdamn/tensor.h"

namespace gdamn {

struct AdamOptions {
  double lr = 0.05;
  // Classic L2: weight_decay * param is added to the gradient before the
  // moment updates.
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed parameter list. Moment state lives as long as the
// optimizer; construct a fresh one per training phase.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);

  // Throws DivergenceError naming the parameter if a gradient is not finite.
  void step();
  void zero_grad();

  const AdamOptions& options() const { return options_; }
  int steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamOptions options_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  int t_ = 0;
};

// Kaiming (He) uniform init in fan-in mode: U(-sqrt(6/fan_in), +sqrt(6/fan_in))
// with fan_in = rows.
Matrix kaiming_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace gdamn

#endif  // GDAMN_OPTIM_H_
