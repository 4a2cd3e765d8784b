// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "plab/objectives.hpp"
#include "plab/rng.hpp"
#include "plab/simlab.hpp"
#include "plab/trainer.hpp"
#include "plab/verify.hpp"

namespace {

using namespace plab;

constexpr std::size_t kVocab = 16;
constexpr std::size_t kWidth = 8;

SimData length_data(std::size_t samples_per_user) {
  SimSpec spec;
  spec.samples_per_user = samples_per_user;
  spec.seed = 1;
  return gen_conflicting_length_dataset(spec);
}

void BM_LogprobSequence(benchmark::State& state) {
  const PolicyParams p = PolicyParams::random(kVocab, kWidth, 1, 0.5);
  const Matrix sp(2, kWidth, 0.1);
  const TokenSeq x{1, 2, 3, 4};
  TokenSeq y(static_cast<std::size_t>(state.range(0)), 5);
  y.push_back(kEos);
  for (auto _ : state) benchmark::DoNotOptimize(logprob_sequence(p, sp, x, y));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(y.size()));
}
BENCHMARK(BM_LogprobSequence)->Arg(1)->Arg(8)->Arg(32);

void BM_LogprobSequenceGrad(benchmark::State& state) {
  const PolicyParams p = PolicyParams::random(kVocab, kWidth, 1, 0.5);
  PolicyParams grad = PolicyParams::zeros(kVocab, kWidth);
  const Matrix sp(2, kWidth, 0.1);
  Matrix sp_grad(2, kWidth);
  const TokenSeq x{1, 2, 3, 4};
  TokenSeq y(static_cast<std::size_t>(state.range(0)), 5);
  y.push_back(kEos);
  for (auto _ : state) benchmark::DoNotOptimize(logprob_sequence(p, sp, x, y, 1.0, grad, &sp_grad));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(y.size()));
}
BENCHMARK(BM_LogprobSequenceGrad)->Arg(1)->Arg(8)->Arg(32);

void BM_PdpoLoss(benchmark::State& state) {
  const SimData sim = length_data(10);
  const std::span<const PreferenceSample> batch(sim.dataset.samples.data(), static_cast<std::size_t>(state.range(0)));
  const PolicyParams sft = PolicyParams::random(kVocab, kWidth, 2, 0.1);
  const ImplicitUserModel um = ImplicitUserModel::individualized(sim.dataset.num_users, 2, kWidth, 3);
  const ObjectiveConfig cfg{0.5, 0.5, ObjectiveKind::PDPO};
  for (auto _ : state) benchmark::DoNotOptimize(pdpo_loss(sft, sft, um, cfg, batch).loss);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PdpoLoss)->Arg(16)->Arg(64);

void BM_TrainSteps(benchmark::State& state) {
  const SimData sim = length_data(50);
  const PolicyParams sft = PolicyParams::random(kVocab, kWidth, 2, 0.1);
  const ParameterBundle init{sft, ImplicitUserModel::individualized(sim.dataset.num_users, 2, kWidth, 3), std::nullopt};
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch_size = 64;
  cfg.step_size = 0.05;
  cfg.log_every = 10;
  cfg.objective = {0.5, 0.5, ObjectiveKind::PDPO};
  for (auto _ : state) benchmark::DoNotOptimize(train(sim.dataset, init, sft, cfg).loss_trace.back().second);
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_TrainSteps)->Unit(benchmark::kMillisecond);

void BM_SampleResponse(benchmark::State& state) {
  PolicyParams p = PolicyParams::random(kVocab, kWidth, 4, 0.5);
  p.out_bias[kEos] = -2.0;
  const TokenSeq x{1, 2, 3, 4};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_response(p, Matrix{}, x, 16, seed++));
}
BENCHMARK(BM_SampleResponse);

void BM_GradCheckPdpo(benchmark::State& state) {
  const TinyShape shape;
  const ObjectiveConfig cfg{0.5, 0.5, ObjectiveKind::PDPO};
  const auto batch = random_batch(shape, 5);
  const ParameterBundle b = random_bundle(shape, cfg, UserModelVariant::Individualized, 5);
  const PolicyParams sft = PolicyParams::random(shape.vocab_size, shape.d, 6, 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(grad_check(cfg, b, sft, batch, 1e-5));
}
BENCHMARK(BM_GradCheckPdpo)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
