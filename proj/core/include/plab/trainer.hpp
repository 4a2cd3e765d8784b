// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/objectives.hpp"
#include "plab/policy.hpp"

namespace plab {

struct TrainConfig {
  std::size_t steps = 1;
  std::size_t batch_size = 32;
  double step_size = 0.01;
  std::uint64_t seed = 0;
  ObjectiveConfig objective;
  std::size_t log_every = 1;
};

/// ConfigError on steps == 0, batch_size == 0, step_size < 0 or log_every == 0.
/// A zero step size is accepted as a null update.
void validate_train_config(const TrainConfig& cfg);

/// ConfigError if `bundle` lacks a part `objective` trains, or has
/// mismatched widths.
void check_bundle_compatible(const ObjectiveConfig& objective, const ParameterBundle& bundle,
                             const PolicyParams& sft);

struct TrainReport {
  /// (step, batch loss before that step's update), every log_every steps.
  std::vector<std::pair<std::size_t, double>> loss_trace;
  ParameterBundle params;
  double wall_time_seconds = 0.0;
};

/// Gradient descent scaled per coordinate by a bias-corrected running RMS
/// of past gradients:
///   v <- decay v + (1 - decay) g^2
///   p <- p - step_size * g / (sqrt(v / (1 - decay^t)) + damping)
class RmsScaledDescent {
 public:
  RmsScaledDescent(const ParameterBundle& shape, double step_size, double decay = 0.999, double damping = 1e-8);

  void step(ParameterBundle& params, ParameterBundle& grad);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  double step_size_;
  double decay_;
  double damping_;
  std::size_t t_ = 0;
  std::vector<double> second_moment_;
};

/// Mini-batch training. Full-batch when the dataset fits in one batch,
/// otherwise seeded without-replacement shuffling per epoch. Same inputs
/// give a bitwise-identical report apart from wall_time_seconds. Throws
/// NumericError at the first step whose loss or gradient is non-finite.
TrainReport train(const PreferenceDataset& dataset, ParameterBundle init, const PolicyParams& sft,
                  const TrainConfig& cfg);

/// Writes "step,loss" rows with round-trip precision.
void write_loss_trace_csv(const TrainReport& report, const std::filesystem::path& path);

/// FNV-1a over the parameter bytes.
std::uint64_t checksum(const PolicyParams& params);

using LossFn = std::function<LossAndGrad(const ParameterBundle&)>;

/// Relative-error floor used by grad_check: err = |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-6;

/// Worst relative error between the analytic gradient and central
/// differences. Checks every coordinate, or a seeded sample of 256 when the
/// bundle has more than 5000 trainable scalars.
double grad_check(const LossFn& loss, const ParameterBundle& at, double epsilon, std::uint64_t seed = 0);

double grad_check(const ObjectiveConfig& objective, const ParameterBundle& at, const PolicyParams& sft, Batch batch,
                  double epsilon, std::uint64_t seed = 0);

}  // namespace plab
