// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// Self-checks run by `plab verify`: the vote-fraction and minority-deviation
// properties of the vanilla reward, the reduction identities between
// personalized and vanilla objectives, and finite-difference gradient checks
// for every objective.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/objectives.hpp"
#include "plab/usermodel.hpp"

namespace plab {

/// Shapes of the random instances used by gradient and reduction checks.
struct TinyShape {
  std::size_t vocab_size = 5;
  std::size_t d = 4;
  std::size_t num_users = 3;
  std::size_t user_tokens = 2;
  std::size_t clusters = 2;
  std::size_t batch = 4;
};

/// Random comparisons: prompts of 1-3 tokens, responses of 0-3 tokens plus
/// EOS, user ids in 0..m with 0-2 text tokens.
std::vector<PreferenceSample> random_batch(const TinyShape& shape, std::uint64_t seed);

/// Random bundle for `objective`. The user model (when the objective needs
/// one) has every tensor randomized, including offsets and cluster weights.
ParameterBundle random_bundle(const TinyShape& shape, const ObjectiveConfig& objective, UserModelVariant variant,
                              std::uint64_t seed);

struct GradientCase {
  std::string name;
  ObjectiveConfig objective;
  UserModelVariant variant = UserModelVariant::Individualized;
};

/// Every objective, with P-DPO under each user-model variant and P-RM under both heads.
std::vector<GradientCase> gradient_cases();

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  /// One of "lemma1", "lemma2", "reductions", "gradients"; empty runs all.
  std::string only;
  std::size_t gradient_seeds = 20;
  double gradient_tolerance = 1e-4;
  double reduction_tolerance = 1e-12;
  /// Test hook applied to every analytic gradient before comparison.
  std::function<void(ObjectiveKind, ParameterBundle&)> tamper_gradient;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  /// Human-readable tables (the minority-deviation sweep), in run order.
  std::vector<std::string> tables;

  bool all_passed() const;
};

/// Five (prompt, pair) groups with mixed votes, one recorded in swapped
/// order; fitted probabilities must match vote fractions within `tolerance`.
CheckResult check_vote_fraction_fit(double tolerance = 1e-3);

struct DeviationSweepRow {
  double majority_weight;
  double dev_minority;
  double dev_majority;
  bool increasing;
  bool minority_ge_majority;
};

/// Weights 0.50, 0.55, ..., 0.95, 0.99.
std::vector<DeviationSweepRow> deviation_sweep(double pref_majority, double pref_minority);
CheckResult check_deviation_sweep(std::string* table = nullptr);

/// Uniform(T_u = 0) with empty text: P-DPO equals vanilla DPO. Uniform with
/// alpha = 0: P-RM equals vanilla RM (both heads). Max abs difference over
/// `batches` random batches.
CheckResult check_reductions(std::size_t batches, double tolerance);

CheckResult check_gradients(const GradientCase& c, std::size_t seeds, double tolerance,
                            const std::function<void(ObjectiveKind, ParameterBundle&)>& tamper = {});

VerifyReport run_verify(const VerifyOptions& options);

}  // namespace plab
