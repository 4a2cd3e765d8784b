// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "plab/errors.hpp"
#include "plab/rng.hpp"
#include "plab/trainer.hpp"
#include "plab/verify.hpp"
#include "test_util.hpp"

using namespace plab;

namespace {

// 50 comparisons where token 2 always beats token 3.
PreferenceDataset separable_dataset() {
  PreferenceDataset d{{}, 6, 2};
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    TokenSeq x{static_cast<Token>(rng.uniform_int(1, 5)), static_cast<Token>(rng.uniform_int(1, 5))};
    d.samples.push_back({x, {2, kEos}, {3, kEos}, {static_cast<std::uint32_t>(i % 3), {}}});
  }
  return d;
}

TrainConfig dpo_config(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 64;
  cfg.step_size = 0.01;
  cfg.seed = 5;
  cfg.objective = {0.5, 0.5, ObjectiveKind::VanillaDPO};
  return cfg;
}

}  // namespace

TEST_CASE("validate_train_config") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate_train_config(cfg));
  cfg.steps = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
  cfg = {};
  cfg.step_size = -1.0;
  CHECK_THROWS_AS(validate_train_config(cfg), ConfigError);
}

TEST_CASE("incompatible bundles are configuration errors") {
  const PreferenceDataset d = separable_dataset();
  const PolicyParams sft = PolicyParams::random(6, 3, 1);
  TrainConfig cfg = dpo_config(1);
  cfg.objective.kind = ObjectiveKind::PDPO;
  CHECK_THROWS_AS(train(d, {sft, std::nullopt, std::nullopt}, sft, cfg), ConfigError);
  cfg.objective.kind = ObjectiveKind::VanillaRM;
  CHECK_THROWS_AS(train(d, {sft, std::nullopt, std::nullopt}, sft, cfg), ConfigError);
  cfg.objective.kind = ObjectiveKind::VanillaDPO;
  CHECK_THROWS_AS(train(d, {sft, std::nullopt, std::nullopt}, PolicyParams::random(5, 3, 1), cfg), ConfigError);
}

TEST_CASE("null update leaves parameters unchanged") {
  const PreferenceDataset d = separable_dataset();
  const PolicyParams sft = PolicyParams::random(6, 3, 2);
  const ParameterBundle init{PolicyParams::random(6, 3, 3), std::nullopt, std::nullopt};
  TrainConfig cfg = dpo_config(1);
  cfg.step_size = 0.0;
  TrainReport r = train(d, init, sft, cfg);
  CHECK(r.params == init);
  REQUIRE(r.loss_trace.size() == 1);
  CHECK(r.loss_trace[0].first == 0);
  CHECK(r.loss_trace[0].second == evaluate_objective(cfg.objective, init, sft, d.samples).loss);
}

TEST_CASE("training is deterministic") {
  const PreferenceDataset d = separable_dataset();
  const PolicyParams sft = PolicyParams::random(6, 3, 4);
  ParameterBundle init{sft, ImplicitUserModel::individualized(2, 2, 3, 5), std::nullopt};
  TrainConfig cfg = dpo_config(30);
  cfg.batch_size = 16;  // exercises shuffling
  cfg.objective.kind = ObjectiveKind::PDPO;
  TrainReport a = train(d, init, sft, cfg);
  TrainReport b = train(d, init, sft, cfg);
  CHECK(a.loss_trace == b.loss_trace);
  CHECK(a.params == b.params);
  cfg.seed = 6;
  CHECK(train(d, init, sft, cfg).loss_trace != a.loss_trace);
}

TEST_CASE("vanilla DPO learns a separable toy dataset") {
  const PreferenceDataset d = separable_dataset();
  const PolicyParams sft = PolicyParams::random(6, 3, 7);
  const std::uint64_t before = checksum(sft);
  TrainConfig cfg = dpo_config(200);
  TrainReport r = train(d, {sft, std::nullopt, std::nullopt}, sft, cfg);
  const double final_loss = evaluate_objective(cfg.objective, r.params, sft, d.samples).loss;
  CHECK(final_loss < std::log(2.0));
  CHECK(checksum(sft) == before);

  REQUIRE(r.loss_trace.size() == 200);
  auto window_mean = [&](std::size_t first) {
    double s = 0.0;
    for (std::size_t i = first; i < first + 20; ++i) s += r.loss_trace[i].second;
    return s / 20.0;
  };
  CHECK(window_mean(180) < window_mean(0));
}

TEST_CASE("loss trace length follows log_every") {
  const PreferenceDataset d = separable_dataset();
  const PolicyParams sft = PolicyParams::random(6, 3, 8);
  for (std::size_t log_every : {1, 3, 4, 10, 25}) {
    TrainConfig cfg = dpo_config(10);
    cfg.log_every = log_every;
    TrainReport r = train(d, {sft, std::nullopt, std::nullopt}, sft, cfg);
    CHECK(r.loss_trace.size() == (10 + log_every - 1) / log_every);
  }
}

TEST_CASE("sft-mle lowers the likelihood loss") {
  const PreferenceDataset d = separable_dataset();
  const ParameterBundle init{PolicyParams::random(6, 3, 9), std::nullopt, std::nullopt};
  TrainConfig cfg = dpo_config(100);
  cfg.objective.kind = ObjectiveKind::SftMle;
  TrainReport r = train(d, init, init.policy, cfg);
  CHECK(r.loss_trace.back().second < r.loss_trace.front().second);
}

TEST_CASE("non-finite loss aborts with the step") {
  const PreferenceDataset d = separable_dataset();
  PolicyParams sft = PolicyParams::random(6, 3, 10);
  const ParameterBundle init{sft, std::nullopt, std::nullopt};
  sft.out_bias[2] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(d, init, sft, dpo_config(5));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("write_loss_trace_csv") {
  testing::TempDir dir("trainer");
  TrainReport r;
  r.loss_trace = {{0, 0.5}, {10, 0.25}};
  write_loss_trace_csv(r, dir / "t.csv");
  CHECK(testing::read_file(dir / "t.csv") == "step,loss\n0,0.5\n10,0.25\n");
}

TEST_CASE("grad_check") {
  SUBCASE("quadratic self-test") {
    ParameterBundle at{PolicyParams::zeros(1, 1), std::nullopt, std::nullopt};
    at.policy.embed(0, 0) = 0.5;
    at.policy.out_map(0, 0) = -0.75;
    at.policy.out_bias[0] = 1.0;
    LossFn quadratic = [](const ParameterBundle& b) {
      LossAndGrad lg{0.0, zeros_like(b)};
      ParameterBundle copy = b;
      auto xs = trainable_tensors(copy);
      auto gs = trainable_tensors(lg.grad);
      double c = 1.0;
      for (std::size_t t = 0; t < xs.size(); ++t)
        for (std::size_t i = 0; i < xs[t].values.size(); ++i, c += 0.5) {
          const double x = xs[t].values[i];
          lg.loss += c * x * x;
          gs[t].values[i] = 2.0 * c * x;
        }
      return lg;
    };
    CHECK(grad_check(quadratic, at, 1e-5) <= 1e-10);
  }
  SUBCASE("p-dpo on a tiny bundle") {
    const TinyShape shape;
    const ObjectiveConfig cfg{0.5, 0.5, ObjectiveKind::PDPO};
    const auto batch = random_batch(shape, 12);
    const ParameterBundle b = random_bundle(shape, cfg, UserModelVariant::Individualized, 12);
    CHECK(grad_check(cfg, b, PolicyParams::random(5, 4, 13, 0.5), batch, 1e-5) <= 1e-4);
  }
  SUBCASE("as-written p-ipo on a tiny bundle") {
    const TinyShape shape;
    const ObjectiveConfig cfg{0.5, 0.5, ObjectiveKind::PIPOAsWritten};
    const auto batch = random_batch(shape, 14);
    const ParameterBundle b = random_bundle(shape, cfg, UserModelVariant::Individualized, 14);
    CHECK(grad_check(cfg, b, PolicyParams::random(5, 4, 15, 0.5), batch, 1e-5) <= 1e-4);
  }
  SUBCASE("a wrong gradient is detected") {
    ParameterBundle at{PolicyParams::random(3, 2, 16, 1.0), std::nullopt, std::nullopt};
    LossFn wrong = [](const ParameterBundle& b) {
      LossAndGrad lg{0.0, zeros_like(b)};
      for (double x : b.policy.out_bias) lg.loss += x * x;
      for (std::size_t k = 0; k < 3; ++k) lg.grad.policy.out_bias[k] = -2.0 * b.policy.out_bias[k];
      return lg;
    };
    at.policy.out_bias = {0.3, -0.2, 0.8};
    CHECK(grad_check(wrong, at, 1e-5) > 1.0);
  }
}
