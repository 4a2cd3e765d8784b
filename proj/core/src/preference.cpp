// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/preference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "plab/errors.hpp"

namespace plab {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

double bt_prob(double reward_chosen, double reward_rejected) {
  if (!std::isfinite(reward_chosen) || !std::isfinite(reward_rejected))
    throw DomainError("bt_prob: rewards must be finite");
  const double gap = reward_chosen - reward_rejected;
  // The complement branch keeps p(a,b) + p(b,a) == 1 bit-exact.
  if (gap >= 0.0) return 1.0 / (1.0 + std::exp(-gap));
  return 1.0 - 1.0 / (1.0 + std::exp(gap));
}

std::vector<ComparisonGroup> group_comparisons(const PreferenceDataset& dataset) {
  using Key = std::tuple<TokenSeq, TokenSeq, TokenSeq>;
  std::map<Key, std::size_t> index;
  std::vector<ComparisonGroup> groups;
  for (const auto& s : dataset.samples) {
    const bool chosen_first = s.chosen < s.rejected;
    const TokenSeq& a = chosen_first ? s.chosen : s.rejected;
    const TokenSeq& b = chosen_first ? s.rejected : s.chosen;
    auto [it, inserted] = index.try_emplace(Key{s.prompt, a, b}, groups.size());
    if (inserted) groups.push_back(ComparisonGroup{s.prompt, a, b, 0, 0});
    auto& g = groups[it->second];
    if (chosen_first)
      ++g.votes_for_a;
    else
      ++g.votes_for_b;
  }
  return groups;
}

double majority_vote_fraction(const ComparisonGroup& group) {
  if (group.total() == 0) throw DomainError("majority_vote_fraction: group has no votes");
  return static_cast<double>(group.votes_for_a) / static_cast<double>(group.total());
}

std::vector<GroupPreferenceEstimate> fit_vanilla_group_rewards(std::span<const ComparisonGroup> groups,
                                                               std::size_t steps, double step_size) {
  std::vector<GroupPreferenceEstimate> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    const double frac = majority_vote_fraction(g);
    double gap = 0.0;
    if (g.votes_for_b == 0) {
      gap = kMaxRewardGap;
    } else if (g.votes_for_a == 0) {
      gap = -kMaxRewardGap;
    } else {
      // d/ds of -[frac log sigma(s) + (1 - frac) log sigma(-s)] is sigma(s) - frac.
      for (std::size_t i = 0; i < steps; ++i) {
        gap -= step_size * (sigmoid(gap) - frac);
        gap = std::clamp(gap, -kMaxRewardGap, kMaxRewardGap);
      }
    }
    out.push_back({g, gap, sigmoid(gap)});
  }
  return out;
}

double marginal_preference(std::span<const double> group_probs, std::span<const double> group_weights) {
  if (group_probs.size() != group_weights.size() || group_probs.empty())
    throw DomainError("marginal_preference: probs and weights must be nonempty and equally long");
  double wsum = 0.0;
  double p = 0.0;
  for (std::size_t j = 0; j < group_probs.size(); ++j) {
    if (group_weights[j] < 0.0) throw DomainError("marginal_preference: negative weight");
    wsum += group_weights[j];
    p += group_weights[j] * group_probs[j];
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw DomainError("marginal_preference: weights do not sum to 1");
  return p;
}

DeviationGap deviation_gap(double majority_weight, double pref_majority, double pref_minority) {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(majority_weight) || !in_unit(pref_majority) || !in_unit(pref_minority) || majority_weight < 0.5)
    throw DomainError("deviation_gap: inputs must lie in [0,1] with majority weight >= 0.5");
  const double marginal = majority_weight * pref_majority + (1.0 - majority_weight) * pref_minority;
  return {std::abs(marginal - pref_minority), std::abs(marginal - pref_majority)};
}

}  // namespace plab
