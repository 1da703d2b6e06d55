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


#include <benchmark/benchmark.h>

#include "gdamn/attention.h"
#include "gdamn/gnn.h"
#include "gdamn/graph.h"
#include "gdamn/tensor.h"
#include "gdamn/trainer.h"

namespace gdamn {
namespace {

Graph sbm(int per_block) {
  SbmConfig c;
  c.nodes_per_block = per_block;
  // Keep the expected degree near the default graph's.
  c.p_in = 10.0 / per_block;
  c.p_out = 2.0 / per_block;
  return generate_sbm(c);
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Matrix a = Matrix::Random(n, 64), b = Matrix::Random(64, 32);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value());
  }
}
BENCHMARK(BM_Matmul)->Arg(400)->Arg(4000);

void BM_SpmmBackward(benchmark::State& state) {
  const Graph g = sbm(static_cast<int>(state.range(0)));
  Parameter x("x", g.features());
  const Vector w = laplacian_weights(g);
  for (auto _ : state) {
    Tape tape;
    const Tensor h = spmm(g.pattern().csr, tape.constant(w), tape.parameter(x));
    tape.backward(sum(h));
    benchmark::DoNotOptimize(x.grad());
    x.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * g.pattern().nnz());
}
BENCHMARK(BM_SpmmBackward)->Arg(100)->Arg(1000);

void BM_GcnForward(benchmark::State& state) {
  const Graph g = sbm(static_cast<int>(state.range(0)));
  Rng rng(2);
  GcnStack stack({g.feature_dim(), 32, g.num_classes()}, 0.5, rng);
  const Vector w = laplacian_weights(g);
  for (auto _ : state) {
    Tape tape;
    const Tensor out = gcn_forward(stack, g, tape.constant(w),
                                   tape.constant(g.features()), false, rng);
    benchmark::DoNotOptimize(out.value());
  }
}
BENCHMARK(BM_GcnForward)->Arg(100)->Arg(1000);

void BM_SoftAttention(benchmark::State& state) {
  const Graph g = sbm(static_cast<int>(state.range(0)));
  Rng rng(3);
  const AttentionParams params(g.num_classes(), g.feature_dim(), 32, 1.0, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(soft_attention(g, g.features(), params));
  }
}
BENCHMARK(BM_SoftAttention)->Arg(100)->Arg(1000);

void BM_StableFusion(benchmark::State& state) {
  const Graph g = sbm(static_cast<int>(state.range(0)));
  const Vector hard = Vector::Constant(g.n_edges(), 0.7);
  const Vector soft = uniform_weights(g);
  for (auto _ : state) {
    benchmark::DoNotOptimize(stable_fusion(g, hard, soft));
  }
}
BENCHMARK(BM_StableFusion)->Arg(100)->Arg(1000);

// One M-step epoch (forward + backward) and one E-step epoch on the default
// graph size.
void BM_MStepEpoch(benchmark::State& state) {
  const Graph g = sbm(100);
  Hyperparams hp;
  Trainer t(g, hp, 0);
  const Matrix y_hat = t.predict();
  const Vector prior = structure_prior(g, y_hat);
  Rng rng(5);
  for (auto _ : state) {
    Tape tape;
    const MStepLoss l = m_step_loss(tape, t.p(), g, y_hat, prior, hp, rng,
                                    StructureMode::kSampleHard, true);
    tape.backward(l.total);
    for (Parameter* p : t.p().parameters()) p->zero_grad();
  }
}
BENCHMARK(BM_MStepEpoch);

void BM_EStepEpoch(benchmark::State& state) {
  const Graph g = sbm(100);
  Hyperparams hp;
  Trainer t(g, hp, 0);
  const Matrix targets = t.predict();
  Rng rng(6);
  for (auto _ : state) {
    Tape tape;
    const Tensor l = e_step_loss(tape, t.q(), g, t.q_weights(), targets, hp, rng, true);
    tape.backward(l);
    for (Parameter* p : t.q().parameters()) p->zero_grad();
  }
}
BENCHMARK(BM_EStepEpoch);

}  // namespace
}  // namespace gdamn

BENCHMARK_MAIN();
