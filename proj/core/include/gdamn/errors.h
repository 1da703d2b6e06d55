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

#ifndef GDAMN_ERRORS_H_
#define GDAMN_ERRORS_H_

#include <stdexcept>
#include <string>
#include <utility>

namespace gdamn {

// Operand shapes do not line up (matmul inner dims, elementwise shapes...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A tensor was used after its tape was cleared, or on a foreign tape.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A softmax row has no admissible entry.
class DegenerateRowError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Graph invariants violated at construction.
class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested inter-class ratio cannot be reached by rewiring or removal.
class InfeasibleTargetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loaded dataset disagrees with its manifest.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameter or experiment configuration. `field()` names the
// offending key.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// NaN/Inf showed up in a loss, gradient or activation.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gdamn

#endif  // GDAMN_ERRORS_H_
