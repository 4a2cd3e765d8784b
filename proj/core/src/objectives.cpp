// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/objectives.hpp"

#include <cmath>

#include "plab/errors.hpp"
#include "plab/preference.hpp"

namespace plab {
namespace {

void require_nonempty(Batch batch, const char* who) {
  if (batch.empty()) throw DomainError(std::string(who) + ": empty batch");
}

ParameterBundle policy_grad_bundle(const PolicyParams& policy) {
  return ParameterBundle{PolicyParams::zeros(policy.vocab_size(), policy.width()), std::nullopt, std::nullopt};
}

UserInfo agnostic_user(const UserInfo& user) { return UserInfo{0, user.text_tokens}; }

// log pi(response | x, u) under the personalized policy. With `grad`, also
// accumulates scale * gradient into the policy and user-model slots.
double personalized_logprob(const PolicyParams& policy, const ImplicitUserModel& implicit, const UserInfo& user,
                            TokenSpan prompt, TokenSpan response, double scale, ParameterBundle* grad) {
  const SoftPrompt sp = user_soft_prompt(policy, &implicit, user);
  if (!grad) return logprob_sequence(policy, sp, prompt, response);
  Matrix sp_grad(sp.rows(), policy.width());
  const double lp = logprob_sequence(policy, sp, prompt, response, scale, grad->policy, &sp_grad);
  embed_user_backprop(implicit, user, sp_grad, *grad->user_model, grad->policy.embed);
  return lp;
}

// Four log-probabilities of one comparison term and their reference values.
struct PairLogprobs {
  double chosen = 0.0;
  double rejected = 0.0;
};

PairLogprobs reference_pair(const PolicyParams& sft, const PreferenceSample& s) {
  const SoftPrompt none;
  return {logprob_sequence(sft, none, s.prompt, s.chosen), logprob_sequence(sft, none, s.prompt, s.rejected)};
}

PairLogprobs personalized_pair(const PolicyParams& policy, const ImplicitUserModel& implicit, const UserInfo& user,
                               const PreferenceSample& s) {
  return {personalized_logprob(policy, implicit, user, s.prompt, s.chosen, 0.0, nullptr),
          personalized_logprob(policy, implicit, user, s.prompt, s.rejected, 0.0, nullptr)};
}

void backprop_pair(const PolicyParams& policy, const ImplicitUserModel& implicit, const UserInfo& user,
                   const PreferenceSample& s, double d_chosen, double d_rejected, ParameterBundle& grad) {
  if (d_chosen != 0.0) personalized_logprob(policy, implicit, user, s.prompt, s.chosen, d_chosen, &grad);
  if (d_rejected != 0.0) personalized_logprob(policy, implicit, user, s.prompt, s.rejected, d_rejected, &grad);
}

ParameterBundle personalized_grad_bundle(const PolicyParams& policy, const ImplicitUserModel& implicit) {
  ParameterBundle g = policy_grad_bundle(policy);
  g.user_model = zeros_like(implicit);
  return g;
}

// Pooled hidden state and reward for the reward-model objectives.
struct RewardEval {
  SoftPrompt soft_prompt;      // rows prepended before pooling (SoftPrompt head)
  Matrix user_rows;            // e_u (Linear head)
  std::vector<double> hidden;
  double reward = 0.0;
};

RewardEval eval_reward(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel* implicit,
                       const UserInfo& user, TokenSpan prompt, TokenSpan response) {
  RewardEval ev;
  const SoftPrompt rows = user_soft_prompt(policy, implicit, user);
  if (head.kind == RewardHeadKind::SoftPrompt) {
    if (head.weight.size() != policy.width()) throw ConfigError("reward head width does not match the policy");
    ev.soft_prompt = rows;
    ev.hidden = pooled_hidden(policy.embed, ev.soft_prompt, {prompt, response});
    ev.reward = head.bias;
    for (std::size_t j = 0; j < ev.hidden.size(); ++j) ev.reward += head.weight[j] * ev.hidden[j];
  } else {
    if (rows.rows() != 1)
      throw ConfigError("linear reward head needs a single-row user embedding, got " +
                        std::to_string(rows.rows()) + " rows");
    ev.user_rows = rows;
    ev.hidden = pooled_hidden(policy.embed, SoftPrompt{}, {prompt, response});
    for (std::size_t j = 0; j < ev.hidden.size(); ++j) ev.reward += rows(0, j) * ev.hidden[j];
  }
  return ev;
}

void backprop_reward(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel* implicit,
                     const UserInfo& user, TokenSpan prompt, TokenSpan response, const RewardEval& ev, double scale,
                     ParameterBundle& grad) {
  if (scale == 0.0) return;
  const std::size_t d = policy.width();
  std::vector<double> g_hidden(d);
  Matrix rows_grad;
  if (head.kind == RewardHeadKind::SoftPrompt) {
    for (std::size_t j = 0; j < d; ++j) {
      grad.head->weight[j] += scale * ev.hidden[j];
      g_hidden[j] = scale * head.weight[j];
    }
    grad.head->bias += scale;
    rows_grad = Matrix(ev.soft_prompt.rows(), d);
    pooled_hidden_backprop(g_hidden, grad.policy.embed, &rows_grad, ev.soft_prompt.rows(), {prompt, response});
  } else {
    rows_grad = Matrix(1, d);
    for (std::size_t j = 0; j < d; ++j) {
      rows_grad(0, j) = scale * ev.hidden[j];
      g_hidden[j] = scale * ev.user_rows(0, j);
    }
    pooled_hidden_backprop(g_hidden, grad.policy.embed, nullptr, 0, {prompt, response});
  }
  if (implicit && rows_grad.rows() > 0) embed_user_backprop(*implicit, user, rows_grad, *grad.user_model, grad.policy.embed);
}

void require_kind(const ObjectiveConfig& cfg, std::initializer_list<ObjectiveKind> kinds, const char* who) {
  for (auto k : kinds)
    if (cfg.kind == k) return;
  throw ConfigError(std::string(who) + ": objective kind '" + std::string(to_string(cfg.kind)) + "' not accepted");
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::SftMle: return "sft-mle";
    case ObjectiveKind::VanillaRM: return "vanilla-rm";
    case ObjectiveKind::VanillaDPO: return "vanilla-dpo";
    case ObjectiveKind::PDPO: return "p-dpo";
    case ObjectiveKind::PIPOAsWritten: return "p-ipo";
    case ObjectiveKind::PIPODifference: return "p-ipo-diff";
    case ObjectiveKind::PRM: return "p-rm";
  }
  return "unknown";
}

ObjectiveKind parse_objective_kind(std::string_view name) {
  for (auto k : {ObjectiveKind::SftMle, ObjectiveKind::VanillaRM, ObjectiveKind::VanillaDPO, ObjectiveKind::PDPO,
                 ObjectiveKind::PIPOAsWritten, ObjectiveKind::PIPODifference, ObjectiveKind::PRM})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown objective '" + std::string(name) + "'");
}

std::string_view to_string(RewardHeadKind kind) {
  return kind == RewardHeadKind::SoftPrompt ? "soft-prompt" : "linear";
}

RewardHeadKind parse_reward_head_kind(std::string_view name) {
  if (name == "soft-prompt") return RewardHeadKind::SoftPrompt;
  if (name == "linear") return RewardHeadKind::Linear;
  throw ConfigError("unknown reward head '" + std::string(name) + "'");
}

void validate_objective(const ObjectiveConfig& cfg) {
  if (!(cfg.beta > 0.0) || !std::isfinite(cfg.beta)) throw ConfigError("beta must be positive and finite");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
}

ParameterBundle zeros_like(const ParameterBundle& bundle) {
  ParameterBundle z = policy_grad_bundle(bundle.policy);
  if (bundle.user_model) z.user_model = zeros_like(*bundle.user_model);
  if (bundle.head) {
    z.head = *bundle.head;
    std::fill(z.head->weight.begin(), z.head->weight.end(), 0.0);
    z.head->bias = 0.0;
  }
  return z;
}

std::vector<TensorView> trainable_tensors(ParameterBundle& bundle) {
  std::vector<TensorView> out;
  out.push_back({"policy.embed", bundle.policy.embed.flat()});
  out.push_back({"policy.out_map", bundle.policy.out_map.flat()});
  out.push_back({"policy.out_bias", bundle.policy.out_bias});
  if (auto& um = bundle.user_model) {
    const std::size_t t = um->user_tokens;
    switch (um->variant) {
      case UserModelVariant::Uniform:
        out.push_back({"user.shared", um->shared.flat()});
        break;
      case UserModelVariant::Individualized:
        if (um->use_generic) out.push_back({"user.generic", um->generic.flat()});
        out.push_back({"user.offsets", um->offsets.rows_span(t, um->num_users * t)});
        break;
      case UserModelVariant::Cluster:
        out.push_back({"user.centers", um->centers.flat()});
        out.push_back({"user.weights", um->weights.flat()});
        break;
    }
  }
  if (auto& h = bundle.head) {
    out.push_back({"head.weight", h->weight});
    out.push_back({"head.bias", std::span<double>(&h->bias, 1)});
  }
  return out;
}

std::size_t trainable_size(const ParameterBundle& bundle) {
  std::size_t n = 0;
  for (const auto& t : trainable_tensors(const_cast<ParameterBundle&>(bundle))) n += t.values.size();
  return n;
}

SoftPrompt user_soft_prompt(const PolicyParams& policy, const ImplicitUserModel* implicit, const UserInfo& user) {
  if (!implicit) return SoftPrompt(0, policy.width());
  if (implicit->width != policy.width()) throw ConfigError("user model width does not match the policy");
  return embed_user(*implicit, ExplicitUserModel(policy.embed), user);
}

LossAndGrad sft_mle_loss(const PolicyParams& policy, Batch batch) {
  require_nonempty(batch, "sft_mle_loss");
  LossAndGrad out{0.0, policy_grad_bundle(policy)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const SoftPrompt none;
  for (const auto& s : batch)
    out.loss -= logprob_sequence(policy, none, s.prompt, s.chosen, -inv_n, out.grad.policy, nullptr);
  out.loss *= inv_n;
  return out;
}

LossAndGrad vanilla_rm_loss(const RewardHead& head, const PolicyParams& policy, Batch batch) {
  require_nonempty(batch, "vanilla_rm_loss");
  if (head.kind != RewardHeadKind::SoftPrompt) throw ConfigError("vanilla RM uses a soft-prompt style (v, c) head");
  LossAndGrad out{0.0, policy_grad_bundle(policy)};
  out.grad.head = RewardHead::soft_prompt(policy.width());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const UserInfo nobody;
  for (const auto& s : batch) {
    const RewardEval r1 = eval_reward(head, policy, nullptr, nobody, s.prompt, s.chosen);
    const RewardEval r2 = eval_reward(head, policy, nullptr, nobody, s.prompt, s.rejected);
    const double gap = r1.reward - r2.reward;
    out.loss -= log_sigmoid(gap);
    const double coef = -sigmoid(-gap) * inv_n;  // dL/dgap
    backprop_reward(head, policy, nullptr, nobody, s.prompt, s.chosen, r1, coef, out.grad);
    backprop_reward(head, policy, nullptr, nobody, s.prompt, s.rejected, r2, -coef, out.grad);
  }
  out.loss *= inv_n;
  return out;
}

LossAndGrad dpo_loss(const PolicyParams& policy, const PolicyParams& sft, const ObjectiveConfig& cfg, Batch batch) {
  require_nonempty(batch, "dpo_loss");
  validate_objective(cfg);
  require_kind(cfg, {ObjectiveKind::VanillaDPO}, "dpo_loss");
  LossAndGrad out{0.0, policy_grad_bundle(policy)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const SoftPrompt none;
  for (const auto& s : batch) {
    const PairLogprobs ref = reference_pair(sft, s);
    const double lp1 = logprob_sequence(policy, none, s.prompt, s.chosen);
    const double lp2 = logprob_sequence(policy, none, s.prompt, s.rejected);
    const double arg = cfg.beta * ((lp1 - ref.chosen) - (lp2 - ref.rejected));
    out.loss -= log_sigmoid(arg);
    const double coef = -cfg.beta * sigmoid(-arg) * inv_n;
    logprob_sequence(policy, none, s.prompt, s.chosen, coef, out.grad.policy, nullptr);
    logprob_sequence(policy, none, s.prompt, s.rejected, -coef, out.grad.policy, nullptr);
  }
  out.loss *= inv_n;
  return out;
}

LossAndGrad pdpo_loss(const PolicyParams& policy, const PolicyParams& sft, const ImplicitUserModel& implicit,
                      const ObjectiveConfig& cfg, Batch batch) {
  require_nonempty(batch, "pdpo_loss");
  validate_objective(cfg);
  require_kind(cfg, {ObjectiveKind::PDPO}, "pdpo_loss");
  LossAndGrad out{0.0, personalized_grad_bundle(policy, implicit)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double weights[2] = {cfg.alpha, 1.0 - cfg.alpha};
  for (const auto& s : batch) {
    const PairLogprobs ref = reference_pair(sft, s);
    const UserInfo users[2] = {s.user, agnostic_user(s.user)};
    double sample_loss = 0.0;
    for (int term = 0; term < 2; ++term) {
      const PairLogprobs lp = personalized_pair(policy, implicit, users[term], s);
      const double arg = cfg.beta * ((lp.chosen - ref.chosen) - (lp.rejected - ref.rejected));
      sample_loss -= weights[term] * log_sigmoid(arg);
      const double coef = -weights[term] * cfg.beta * sigmoid(-arg) * inv_n;
      backprop_pair(policy, implicit, users[term], s, coef, -coef, out.grad);
    }
    out.loss += sample_loss;
  }
  out.loss *= inv_n;
  return out;
}

LossAndGrad pipo_loss(const PolicyParams& policy, const PolicyParams& sft, const ImplicitUserModel& implicit,
                      const ObjectiveConfig& cfg, Batch batch) {
  require_nonempty(batch, "pipo_loss");
  validate_objective(cfg);
  require_kind(cfg, {ObjectiveKind::PIPOAsWritten, ObjectiveKind::PIPODifference}, "pipo_loss");
  const bool as_written = cfg.kind == ObjectiveKind::PIPOAsWritten;
  LossAndGrad out{0.0, personalized_grad_bundle(policy, implicit)};
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double margin = 1.0 / (2.0 * cfg.beta);
  const double weights[2] = {cfg.alpha, 1.0 - cfg.alpha};

  auto statistic = [&](const PairLogprobs& lp) {
    if (!as_written) return lp.chosen - lp.rejected;
    if (lp.rejected == 0.0) throw DomainError("pipo_loss: log-probability of the rejected response is zero");
    return lp.chosen / lp.rejected;
  };

  for (const auto& s : batch) {
    const PairLogprobs ref = reference_pair(sft, s);
    const double q_ref = statistic(ref);
    const UserInfo users[2] = {s.user, agnostic_user(s.user)};
    double sample_loss = 0.0;
    for (int term = 0; term < 2; ++term) {
      const PairLogprobs lp = personalized_pair(policy, implicit, users[term], s);
      const double resid = (statistic(lp) - q_ref) - margin;
      sample_loss += weights[term] * resid * resid;
      const double d_q = 2.0 * weights[term] * resid * inv_n;
      double d_chosen = d_q;
      double d_rejected = -d_q;
      if (as_written) {
        d_chosen = d_q / lp.rejected;
        d_rejected = -d_q * lp.chosen / (lp.rejected * lp.rejected);
      }
      backprop_pair(policy, implicit, users[term], s, d_chosen, d_rejected, out.grad);
    }
    out.loss += sample_loss;
  }
  out.loss *= inv_n;
  return out;
}

LossAndGrad prm_loss(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel& implicit,
                     const ObjectiveConfig& cfg, Batch batch) {
  require_nonempty(batch, "prm_loss");
  validate_objective(cfg);
  require_kind(cfg, {ObjectiveKind::PRM}, "prm_loss");
  if (head.kind == RewardHeadKind::Linear && implicit.user_tokens != 1)
    throw ConfigError("linear reward head requires T_u = 1");
  LossAndGrad out{0.0, personalized_grad_bundle(policy, implicit)};
  out.grad.head = head;
  std::fill(out.grad.head->weight.begin(), out.grad.head->weight.end(), 0.0);
  out.grad.head->bias = 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double weights[2] = {cfg.alpha, 1.0 - cfg.alpha};
  const UserInfo empty_user;
  for (const auto& s : batch) {
    const UserInfo* users[2] = {&s.user, &empty_user};
    double sample_loss = 0.0;
    for (int term = 0; term < 2; ++term) {
      const RewardEval r1 = eval_reward(head, policy, &implicit, *users[term], s.prompt, s.chosen);
      const RewardEval r2 = eval_reward(head, policy, &implicit, *users[term], s.prompt, s.rejected);
      const double gap = r1.reward - r2.reward;
      sample_loss -= weights[term] * log_sigmoid(gap);
      const double coef = -weights[term] * sigmoid(-gap) * inv_n;
      backprop_reward(head, policy, &implicit, *users[term], s.prompt, s.chosen, r1, coef, out.grad);
      backprop_reward(head, policy, &implicit, *users[term], s.prompt, s.rejected, r2, -coef, out.grad);
    }
    out.loss += sample_loss;
  }
  out.loss *= inv_n;
  return out;
}

LossAndGrad evaluate_objective(const ObjectiveConfig& cfg, const ParameterBundle& bundle, const PolicyParams& sft,
                               Batch batch) {
  auto need_user = [&]() -> const ImplicitUserModel& {
    if (!bundle.user_model)
      throw ConfigError("objective '" + std::string(to_string(cfg.kind)) + "' needs a user model");
    return *bundle.user_model;
  };
  auto need_head = [&]() -> const RewardHead& {
    if (!bundle.head) throw ConfigError("objective '" + std::string(to_string(cfg.kind)) + "' needs a reward head");
    return *bundle.head;
  };
  LossAndGrad out;
  switch (cfg.kind) {
    case ObjectiveKind::SftMle: out = sft_mle_loss(bundle.policy, batch); break;
    case ObjectiveKind::VanillaRM: out = vanilla_rm_loss(need_head(), bundle.policy, batch); break;
    case ObjectiveKind::VanillaDPO: out = dpo_loss(bundle.policy, sft, cfg, batch); break;
    case ObjectiveKind::PDPO: out = pdpo_loss(bundle.policy, sft, need_user(), cfg, batch); break;
    case ObjectiveKind::PIPOAsWritten:
    case ObjectiveKind::PIPODifference: out = pipo_loss(bundle.policy, sft, need_user(), cfg, batch); break;
    case ObjectiveKind::PRM: out = prm_loss(need_head(), bundle.policy, need_user(), cfg, batch); break;
  }
  // Give the gradient the bundle's full shape so optimizers can zip the two.
  ParameterBundle shaped = zeros_like(bundle);
  shaped.policy = std::move(out.grad.policy);
  if (bundle.user_model && out.grad.user_model) shaped.user_model = std::move(out.grad.user_model);
  if (bundle.head && out.grad.head) shaped.head = std::move(out.grad.head);
  out.grad = std::move(shaped);
  return out;
}

double implicit_reward(const PolicyParams& policy, const PolicyParams& sft, const ImplicitUserModel* implicit,
                       double beta, TokenSpan prompt, TokenSpan response, const UserInfo& user) {
  const SoftPrompt sp = user_soft_prompt(policy, implicit, user);
  const SoftPrompt none;
  return beta * (logprob_sequence(policy, sp, prompt, response) - logprob_sequence(sft, none, prompt, response));
}

double reward_score(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel* implicit,
                    TokenSpan prompt, TokenSpan response, const UserInfo& user) {
  return eval_reward(head, policy, implicit, user, prompt, response).reward;
}

}  // namespace plab
