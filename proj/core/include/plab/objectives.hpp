// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// Preference-learning objectives with exact analytic gradients.
//
// Log-ratios are taken against a fixed, unconditioned reference policy:
//   D_k = log pi(y_k | x, soft prompt) - log pi_ref(y_k | x)
//
//   vanilla RM  -log sigmoid(r(x,y1) - r(x,y2))
//   vanilla DPO -log sigmoid(beta (D_1 - D_2))
//   P-DPO       -[a log sigmoid(beta (D_1^u - D_2^u)) + (1-a) log sigmoid(beta (D_1^0 - D_2^0))]
//               where ^u conditions on (u^t, u^p) and ^0 on (u^t, 0)
//   P-IPO       a (Q^u - Q_ref - 1/(2 beta))^2 + (1-a) (Q^0 - Q_ref - 1/(2 beta))^2
//               Q = log pi(y1)/log pi(y2) (as-written) or log pi(y1) - log pi(y2) (difference)
//   P-RM        -[a log sigmoid(r(y1,u) - r(y2,u)) + (1-a) log sigmoid(r(y1,u0) - r(y2,u0))]
//               where u0 carries no user information at all
//
// Every loss is the arithmetic mean over the batch.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/policy.hpp"
#include "plab/usermodel.hpp"

namespace plab {

enum class ObjectiveKind { SftMle, VanillaRM, VanillaDPO, PDPO, PIPOAsWritten, PIPODifference, PRM };
enum class RewardHeadKind { SoftPrompt, Linear };

std::string_view to_string(ObjectiveKind kind);
/// "sft-mle", "vanilla-rm", "vanilla-dpo", "p-dpo", "p-ipo", "p-ipo-diff", "p-rm".
ObjectiveKind parse_objective_kind(std::string_view name);
std::string_view to_string(RewardHeadKind kind);
/// "soft-prompt" or "linear".
RewardHeadKind parse_reward_head_kind(std::string_view name);

struct ObjectiveConfig {
  double beta = 0.1;
  double alpha = 0.5;
  ObjectiveKind kind = ObjectiveKind::VanillaDPO;
  RewardHeadKind rm_aggregation = RewardHeadKind::SoftPrompt;
};

/// ConfigError unless beta > 0 and alpha in [0, 1].
void validate_objective(const ObjectiveConfig& cfg);

/// Reward read-out. SoftPrompt: r = weight . h + bias over the pooled
/// (e_u, x, y) state. Linear: r = e_u . h over pooled (x, y); the user
/// embedding must then be a single row.
struct RewardHead {
  RewardHeadKind kind = RewardHeadKind::SoftPrompt;
  std::vector<double> weight;
  double bias = 0.0;

  static RewardHead soft_prompt(std::size_t d) { return {RewardHeadKind::SoftPrompt, std::vector<double>(d, 0.0), 0.0}; }
  static RewardHead linear() { return {RewardHeadKind::Linear, {}, 0.0}; }

  friend bool operator==(const RewardHead&, const RewardHead&) = default;
};

/// Everything an objective may train. The reference policy lives outside.
struct ParameterBundle {
  PolicyParams policy;
  std::optional<ImplicitUserModel> user_model;
  std::optional<RewardHead> head;

  friend bool operator==(const ParameterBundle&, const ParameterBundle&) = default;
};

ParameterBundle zeros_like(const ParameterBundle& bundle);

struct TensorView {
  std::string name;
  std::span<double> values;
};

/// Trainable tensors in a fixed order. Excludes the pinned user-0 offset
/// slab and a disabled generic embedding.
std::vector<TensorView> trainable_tensors(ParameterBundle& bundle);
std::size_t trainable_size(const ParameterBundle& bundle);

struct LossAndGrad {
  double loss = 0.0;
  ParameterBundle grad;
};

using Batch = std::span<const PreferenceSample>;

/// Mean negative log-likelihood of the chosen responses (reference-model fitting).
LossAndGrad sft_mle_loss(const PolicyParams& policy, Batch batch);

LossAndGrad vanilla_rm_loss(const RewardHead& head, const PolicyParams& policy, Batch batch);

LossAndGrad dpo_loss(const PolicyParams& policy, const PolicyParams& sft, const ObjectiveConfig& cfg, Batch batch);

/// The explicit user model is the policy's own token table.
LossAndGrad pdpo_loss(const PolicyParams& policy, const PolicyParams& sft, const ImplicitUserModel& implicit,
                      const ObjectiveConfig& cfg, Batch batch);

LossAndGrad pipo_loss(const PolicyParams& policy, const PolicyParams& sft, const ImplicitUserModel& implicit,
                      const ObjectiveConfig& cfg, Batch batch);

LossAndGrad prm_loss(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel& implicit,
                     const ObjectiveConfig& cfg, Batch batch);

/// Dispatches on cfg.kind. ConfigError if the bundle lacks a part the objective needs.
LossAndGrad evaluate_objective(const ObjectiveConfig& cfg, const ParameterBundle& bundle, const PolicyParams& sft,
                               Batch batch);

/// Soft prompt the personalized policy sees for `user`; empty without a user model.
SoftPrompt user_soft_prompt(const PolicyParams& policy, const ImplicitUserModel* implicit, const UserInfo& user);

/// beta * (log pi_P(y | x, u) - log pi_ref(y | x)).
double implicit_reward(const PolicyParams& policy, const PolicyParams& sft, const ImplicitUserModel* implicit,
                       double beta, TokenSpan prompt, TokenSpan response, const UserInfo& user);

/// Reward-model score r(x, y, u). Without a user model this is the vanilla RM.
double reward_score(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel* implicit,
                    TokenSpan prompt, TokenSpan response, const UserInfo& user);

}  // namespace plab
