// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic annotators with known preferences, and the metrics used to
// check whether a personalized policy recovered them.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/objectives.hpp"
#include "plab/policy.hpp"
#include "plab/usermodel.hpp"

namespace plab {

enum class PreferenceKind { PrefersLonger, PrefersShorter, Profile };
enum class JudgeDimension { Length, DistinctTokens, MarkerPresence };

std::string_view to_string(JudgeDimension dim);
JudgeDimension parse_judge_dimension(std::string_view name);

struct UserPreference {
  std::uint32_t user_id = 0;
  PreferenceKind kind = PreferenceKind::PrefersLonger;
  // Profile judges only.
  JudgeDimension dimension = JudgeDimension::Length;
  bool prefers_high = true;
  Token marker = 1;
  /// Reporting group, e.g. "majority" / "minority" or a profile pole.
  std::string group;
  /// Unseen users contribute evaluation data only.
  bool seen = true;

  friend bool operator==(const UserPreference&, const UserPreference&) = default;
};

struct UserGroundTruth {
  std::vector<UserPreference> users;

  /// nullptr for ids without ground truth (including 0).
  const UserPreference* find(std::uint32_t user_id) const;
  std::vector<std::uint32_t> seen_ids() const;
  /// group name -> seen user ids, ascending.
  std::map<std::string, std::vector<std::uint32_t>> groups() const;

  friend bool operator==(const UserGroundTruth&, const UserGroundTruth&) = default;
};

/// Higher is better for this user.
double judge_score(const UserPreference& judge, TokenSpan response);

struct SimSpec {
  std::size_t num_users = 10;
  double majority_fraction = 0.7;
  std::size_t samples_per_user = 500;
  std::size_t vocab_size = 16;
  std::size_t prompt_len = 4;
  std::size_t len_short = 1;
  std::size_t len_long = 8;
  /// Extra users (ids m+1..) held out from training.
  std::size_t unseen_users = 0;
  std::uint64_t seed = 0;
};

/// ConfigError naming the offending field.
void validate_sim_spec(const SimSpec& spec);

struct SimData {
  PreferenceDataset dataset;
  UserGroundTruth truth;
};

/// ceil(m * majority_fraction) seen users prefer the longer response, the
/// rest the shorter one. Unseen users are split the same way.
SimData gen_conflicting_length_dataset(const SimSpec& spec);

struct ProfileSpec {
  std::vector<JudgeDimension> dimensions{JudgeDimension::Length, JudgeDimension::DistinctTokens,
                                         JudgeDimension::MarkerPresence};
  std::size_t samples_per_user = 200;
  std::size_t vocab_size = 16;
  std::size_t prompt_len = 4;
  std::size_t min_len = 1;
  std::size_t max_len = 8;
  Token marker = 1;
  std::uint64_t seed = 0;
};

/// Two users per dimension (high pole, low pole). Pairs the judge scores
/// as equal are redrawn.
SimData gen_profile_dataset(const ProfileSpec& spec);

/// Seeded per-sample split. Samples of unseen users always go to eval.
std::pair<PreferenceDataset, PreferenceDataset> split_train_eval(const PreferenceDataset& dataset,
                                                                 const UserGroundTruth& truth,
                                                                 double eval_fraction, std::uint64_t seed);

struct MeanStderr {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Sample mean and standard error (n - 1 denominator; 0 for n < 2).
MeanStderr mean_stderr(std::span<const double> values);

struct GroupAccuracy {
  std::vector<std::uint32_t> users;
  MeanStderr accuracy;
};

struct EvalReport {
  /// Pooled over samples of seen users.
  double accuracy_top = 0.0;
  std::size_t top_samples = 0;
  /// Unseen users' samples, scored with the generic user (id 0).
  std::optional<double> accuracy_generic;
  std::size_t generic_samples = 0;
  std::map<std::string, GroupAccuracy> accuracy_average;
  std::map<std::uint32_t, double> per_user_accuracy;
};

/// A comparison counts as correct only when the chosen response gets a
/// strictly higher implicit reward. Pass implicit = nullptr for a vanilla policy.
EvalReport eval_accuracy(const PolicyParams& policy, const ImplicitUserModel* implicit, const PolicyParams& sft,
                         double beta, const PreferenceDataset& dataset, const UserGroundTruth& truth);

struct UserLengthStats {
  std::uint32_t user_id = 0;
  MeanStderr length;
};

/// Per user, `draws` samples per prompt; length is |y| - 1.
std::vector<UserLengthStats> eval_lengths(const PolicyParams& policy, const ImplicitUserModel* implicit,
                                          std::span<const UserInfo> users, std::span<const TokenSeq> prompts,
                                          std::size_t draws, std::size_t max_len, std::uint64_t seed);

/// Fraction of prompts where a scores at least as well as b. Ties credit
/// both sides. DomainError on unequal list lengths or empty lists.
double oracle_winrate(std::span<const TokenSeq> responses_a, std::span<const TokenSeq> responses_b,
                      const UserPreference& judge);

using ResponseScorer = std::function<double(TokenSpan response)>;

/// Draws n responses from the unconditioned policy and returns the one with
/// the highest score; the earliest wins ties.
TokenSeq best_of_n(const PolicyParams& policy, TokenSpan prompt, std::size_t n, std::size_t max_len,
                   std::uint64_t seed, const ResponseScorer& score);

/// Best-of-N ranked by a (personalized) reward model.
TokenSeq best_of_n(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel* implicit,
                   TokenSpan prompt, const UserInfo& user, std::size_t n, std::size_t max_len, std::uint64_t seed);

std::string eval_report_json(const EvalReport& report);
void save_eval_report(const EvalReport& report, const std::filesystem::path& path);
void save_length_table(std::span<const UserLengthStats> rows, const std::filesystem::path& path);
void save_ground_truth(const UserGroundTruth& truth, const std::filesystem::path& path);
UserGroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace plab
