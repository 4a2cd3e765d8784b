// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// Bradley-Terry preference mathematics, plus executable checks of what the
// vanilla (user-agnostic) reward MLE can and cannot represent: within each
// (prompt, response pair) group it reproduces the vote fraction, and with
// two conflicting user groups the minority always ends up further from the
// fitted preference than the majority.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "plab/corpus.hpp"

namespace plab {

/// Logistic function, evaluated without overflow for any finite input.
double sigmoid(double x);
/// log(sigmoid(x)) without cancellation for large |x|.
double log_sigmoid(double x);

/// P(y1 > y2) = sigmoid(r1 - r2). bt_prob(a, b) + bt_prob(b, a) == 1 exactly.
/// Throws DomainError on non-finite rewards.
double bt_prob(double reward_chosen, double reward_rejected);

/// Comparisons sharing a prompt and an unordered response pair. `a` is the
/// lexicographically smaller response.
struct ComparisonGroup {
  TokenSeq prompt;
  TokenSeq a;
  TokenSeq b;
  std::size_t votes_for_a = 0;
  std::size_t votes_for_b = 0;

  std::size_t total() const noexcept { return votes_for_a + votes_for_b; }
};

struct GroupPreferenceEstimate {
  ComparisonGroup group;
  /// s = r(x, a) - r(x, b)
  double fitted_reward_gap = 0.0;
  double fitted_probability = 0.5;
};

/// Gap bound used for unanimous groups, whose likelihood has no finite maximizer.
inline constexpr double kMaxRewardGap = 30.0;

/// Groups samples by (prompt, unordered pair), in order of first appearance.
std::vector<ComparisonGroup> group_comparisons(const PreferenceDataset& dataset);

/// votes_for_a / total; DomainError on an empty group.
double majority_vote_fraction(const ComparisonGroup& group);

/// Per-group gradient descent on the scalar gap minimizing the group's
/// Bradley-Terry negative log-likelihood. Unanimous groups are assigned
/// +/- kMaxRewardGap directly.
std::vector<GroupPreferenceEstimate> fit_vanilla_group_rewards(std::span<const ComparisonGroup> groups,
                                                               std::size_t steps, double step_size);

/// sum_j w_j p_j. Weights must be nonnegative and sum to 1 within 1e-9.
double marginal_preference(std::span<const double> group_probs, std::span<const double> group_weights);

struct DeviationGap {
  double minority = 0.0;
  double majority = 0.0;
};

/// Distance of each group's preference from the two-group marginal
/// w * pref_majority + (1 - w) * pref_minority.
DeviationGap deviation_gap(double majority_weight, double pref_majority, double pref_minority);

}  // namespace plab
