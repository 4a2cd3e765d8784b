// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "plab/errors.hpp"
#include "plab/preference.hpp"
#include "plab/rng.hpp"
#include "plab/trainer.hpp"

namespace plab {
namespace {

constexpr double kFiniteDifferenceStep = 1e-5;

TokenSeq draw_tokens(Rng& rng, std::size_t lo, std::size_t hi, std::size_t vocab) {
  TokenSeq out(rng.uniform_int(lo, hi));
  for (auto& t : out) t = static_cast<Token>(rng.uniform_int(1, vocab - 1));
  return out;
}

void randomize(Matrix& m, Rng& rng, double scale) {
  for (double& x : m.flat()) x = rng.uniform(-scale, scale);
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

bool needs_user_model(ObjectiveKind k) {
  return k == ObjectiveKind::PDPO || k == ObjectiveKind::PIPOAsWritten || k == ObjectiveKind::PIPODifference ||
         k == ObjectiveKind::PRM;
}

}  // namespace

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<PreferenceSample> random_batch(const TinyShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PreferenceSample> batch;
  while (batch.size() < shape.batch) {
    PreferenceSample s;
    s.prompt = draw_tokens(rng, 1, 3, shape.vocab_size);
    s.chosen = draw_tokens(rng, 0, 3, shape.vocab_size);
    s.chosen.push_back(kEos);
    s.rejected = draw_tokens(rng, 0, 3, shape.vocab_size);
    s.rejected.push_back(kEos);
    s.user.user_id = static_cast<std::uint32_t>(rng.uniform_int(0, shape.num_users));
    s.user.text_tokens = draw_tokens(rng, 0, 2, shape.vocab_size);
    if (s.chosen == s.rejected) continue;
    batch.push_back(std::move(s));
  }
  return batch;
}

ParameterBundle random_bundle(const TinyShape& shape, const ObjectiveConfig& objective, UserModelVariant variant,
                              std::uint64_t seed) {
  Rng rng(seed);
  ParameterBundle b;
  b.policy = PolicyParams::random(shape.vocab_size, shape.d, derive_seed(seed, {1}), 0.5);
  for (double& x : b.policy.out_bias) x = rng.uniform(-0.5, 0.5);
  if (needs_user_model(objective.kind)) {
    const bool linear = objective.kind == ObjectiveKind::PRM && objective.rm_aggregation == RewardHeadKind::Linear;
    const std::size_t t_u = linear ? 1 : shape.user_tokens;
    const auto useed = derive_seed(seed, {2});
    switch (variant) {
      case UserModelVariant::Uniform:
        b.user_model = ImplicitUserModel::uniform(shape.num_users, t_u, shape.d, useed, 0.5);
        break;
      case UserModelVariant::Individualized:
        b.user_model = ImplicitUserModel::individualized(shape.num_users, t_u, shape.d, useed, true, 0.5);
        randomize(b.user_model->offsets, rng, 0.5);
        for (double& x : b.user_model->offsets.rows_span(0, t_u)) x = 0.0;
        break;
      case UserModelVariant::Cluster:
        b.user_model = ImplicitUserModel::cluster(shape.num_users, t_u, shape.d, shape.clusters, useed, 0.5);
        randomize(b.user_model->weights, rng, 1.0);
        break;
    }
  }
  if (objective.kind == ObjectiveKind::VanillaRM || objective.kind == ObjectiveKind::PRM) {
    if (objective.rm_aggregation == RewardHeadKind::Linear) {
      b.head = RewardHead::linear();
    } else {
      b.head = RewardHead::soft_prompt(shape.d);
      for (double& x : b.head->weight) x = rng.uniform(-1.0, 1.0);
      b.head->bias = rng.uniform(-1.0, 1.0);
    }
  }
  return b;
}

std::vector<GradientCase> gradient_cases() {
  using K = ObjectiveKind;
  using V = UserModelVariant;
  auto cfg = [](K kind, double beta, double alpha, RewardHeadKind head = RewardHeadKind::SoftPrompt) {
    return ObjectiveConfig{beta, alpha, kind, head};
  };
  return {
      {"sft-mle", cfg(K::SftMle, 0.5, 0.5), V::Uniform},
      {"vanilla-rm", cfg(K::VanillaRM, 0.5, 0.5), V::Uniform},
      {"vanilla-dpo", cfg(K::VanillaDPO, 0.5, 0.5), V::Uniform},
      {"p-dpo/uniform", cfg(K::PDPO, 0.5, 0.5), V::Uniform},
      {"p-dpo/individualized", cfg(K::PDPO, 0.5, 0.5), V::Individualized},
      {"p-dpo/cluster", cfg(K::PDPO, 0.5, 0.5), V::Cluster},
      {"p-ipo/as-written", cfg(K::PIPOAsWritten, 0.5, 0.5), V::Individualized},
      {"p-ipo/difference", cfg(K::PIPODifference, 0.5, 0.5), V::Individualized},
      {"p-rm/soft-prompt", cfg(K::PRM, 0.5, 0.5), V::Individualized},
      {"p-rm/linear", cfg(K::PRM, 0.5, 0.5, RewardHeadKind::Linear), V::Individualized},
  };
}

CheckResult check_vote_fraction_fit(double tolerance) {
  // Five groups; group 3 mixes both recording orders of the same pair.
  PreferenceDataset d{{}, 6, 1};
  auto add = [&d](TokenSeq x, TokenSeq chosen, TokenSeq rejected, std::size_t times) {
    for (std::size_t i = 0; i < times; ++i) d.samples.push_back({x, chosen, rejected, {1, {}}});
  };
  add({1}, {2, 0}, {3, 0}, 2);
  add({1}, {3, 0}, {2, 0}, 1);
  add({2}, {4, 0}, {5, 0}, 1);
  add({2}, {5, 0}, {4, 0}, 1);
  add({3}, {1, 2, 0}, {0}, 3);
  add({3}, {0}, {1, 2, 0}, 2);
  add({4}, {5, 5, 0}, {5, 0}, 1);
  add({4}, {5, 0}, {5, 5, 0}, 4);
  add({5}, {2, 0}, {4, 0}, 7);
  add({5}, {4, 0}, {2, 0}, 3);
  const auto groups = group_comparisons(d);
  const auto fits = fit_vanilla_group_rewards(groups, 2000, 4.0);
  CheckResult r{"lemma1/vote-fraction", groups.size() == 5, ""};
  double worst = 0.0;
  for (const auto& f : fits) worst = std::max(worst, std::abs(f.fitted_probability - majority_vote_fraction(f.group)));
  r.passed = r.passed && worst < tolerance;
  r.detail = std::to_string(groups.size()) + " groups, max |sigma(s) - vote fraction| = " + fmt(worst);
  return r;
}

std::vector<DeviationSweepRow> deviation_sweep(double pref_majority, double pref_minority) {
  std::vector<int> hundredths;
  for (int w = 50; w <= 95; w += 5) hundredths.push_back(w);
  hundredths.push_back(99);
  std::vector<DeviationSweepRow> rows;
  for (int w : hundredths) {
    const double weight = w / 100.0;
    const auto gap = deviation_gap(weight, pref_majority, pref_minority);
    const bool increasing = rows.empty() || gap.minority > rows.back().dev_minority;
    rows.push_back({weight, gap.minority, gap.majority, increasing, gap.minority >= gap.majority});
  }
  return rows;
}

CheckResult check_deviation_sweep(std::string* table) {
  const auto rows = deviation_sweep(1.0, 0.0);
  CheckResult r{"lemma2/minority-deviation", true, ""};
  std::ostringstream t;
  t << "  w      dev_minority  dev_majority  increasing  minority>=majority\n";
  for (const auto& row : rows) {
    r.passed = r.passed && row.increasing && row.minority_ge_majority;
    char line[128];
    std::snprintf(line, sizeof line, "  %.2f   %-12.6f  %-12.6f  %-10s  %s\n", row.majority_weight, row.dev_minority,
                  row.dev_majority, row.increasing ? "yes" : "NO", row.minority_ge_majority ? "yes" : "NO");
    t << line;
  }
  if (table) *table = t.str();
  r.detail = std::to_string(rows.size()) + " weights, prefs (1, 0)";
  return r;
}

CheckResult check_reductions(std::size_t batches, double tolerance) {
  TinyShape shape;
  double worst_dpo = 0.0, worst_rm = 0.0, worst_linear = 0.0;
  for (std::size_t i = 0; i < batches; ++i) {
    auto batch = random_batch(shape, derive_seed(0xbeef, {i}));
    for (auto& s : batch) s.user.text_tokens.clear();
    const auto policy = PolicyParams::random(shape.vocab_size, shape.d, derive_seed(0xbeef, {i, 1}), 0.5);
    const auto sft = PolicyParams::random(shape.vocab_size, shape.d, derive_seed(0xbeef, {i, 2}), 0.5);
    const auto empty_model = ImplicitUserModel::uniform(shape.num_users, 0, shape.d, 0);

    const double alpha = static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(batches - 1, 1));
    const ObjectiveConfig dpo{0.5, alpha, ObjectiveKind::VanillaDPO};
    const ObjectiveConfig pdpo{0.5, alpha, ObjectiveKind::PDPO};
    worst_dpo = std::max(worst_dpo, std::abs(pdpo_loss(policy, sft, empty_model, pdpo, batch).loss -
                                             dpo_loss(policy, sft, dpo, batch).loss));

    Rng rng(derive_seed(0xbeef, {i, 3}));
    RewardHead head = RewardHead::soft_prompt(shape.d);
    for (double& x : head.weight) x = rng.uniform(-1.0, 1.0);
    head.bias = rng.uniform(-1.0, 1.0);
    const ObjectiveConfig prm{0.5, 0.0, ObjectiveKind::PRM};
    worst_rm = std::max(worst_rm, std::abs(prm_loss(head, policy, empty_model, prm, batch).loss -
                                           vanilla_rm_loss(head, policy, batch).loss));

    // Linear head: a one-row uniform embedding plays the role of the vanilla head weights.
    const auto one_row = ImplicitUserModel::uniform(shape.num_users, 1, shape.d, derive_seed(0xbeef, {i, 4}), 1.0);
    RewardHead as_vanilla = RewardHead::soft_prompt(shape.d);
    std::copy(one_row.shared.flat().begin(), one_row.shared.flat().end(), as_vanilla.weight.begin());
    const ObjectiveConfig prm_linear{0.5, 0.0, ObjectiveKind::PRM, RewardHeadKind::Linear};
    worst_linear = std::max(worst_linear, std::abs(prm_loss(RewardHead::linear(), policy, one_row, prm_linear, batch).loss -
                                                   vanilla_rm_loss(as_vanilla, policy, batch).loss));
  }
  CheckResult r{"reductions", worst_dpo <= tolerance && worst_rm <= tolerance && worst_linear <= tolerance, ""};
  r.detail = "p-dpo vs dpo " + fmt(worst_dpo) + ", p-rm vs rm " + fmt(worst_rm) + ", p-rm(linear) vs rm " +
             fmt(worst_linear) + " over " + std::to_string(batches) + " batches";
  return r;
}

CheckResult check_gradients(const GradientCase& c, std::size_t seeds, double tolerance,
                            const std::function<void(ObjectiveKind, ParameterBundle&)>& tamper) {
  TinyShape shape;
  double worst = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto seed = derive_seed(0x9e37, {s});
    auto batch = random_batch(shape, seed);
    if (c.objective.kind == ObjectiveKind::PRM && c.objective.rm_aggregation == RewardHeadKind::Linear)
      for (auto& sample : batch) sample.user.text_tokens.clear();
    const auto bundle = random_bundle(shape, c.objective, c.variant, seed);
    const auto sft = PolicyParams::random(shape.vocab_size, shape.d, derive_seed(seed, {7}), 0.5);
    LossFn fn = [&](const ParameterBundle& b) {
      LossAndGrad lg = evaluate_objective(c.objective, b, sft, batch);
      if (tamper) tamper(c.objective.kind, lg.grad);
      return lg;
    };
    worst = std::max(worst, grad_check(fn, bundle, kFiniteDifferenceStep, seed));
  }
  return {"gradients/" + c.name, worst <= tolerance, "max relative error " + fmt(worst) + " over " +
                                                          std::to_string(seeds) + " seeds"};
}

VerifyReport run_verify(const VerifyOptions& options) {
  const std::string& only = options.only;
  if (!only.empty() && only != "lemma1" && only != "lemma2" && only != "reductions" && only != "gradients")
    throw ConfigError("verify: unknown check group '" + only + "'");
  VerifyReport report;
  auto wanted = [&](const char* name) { return only.empty() || only == name; };
  if (wanted("lemma1")) report.checks.push_back(check_vote_fraction_fit());
  if (wanted("lemma2")) {
    std::string table;
    report.checks.push_back(check_deviation_sweep(&table));
    report.tables.push_back(std::move(table));
  }
  if (wanted("reductions")) report.checks.push_back(check_reductions(10, options.reduction_tolerance));
  if (wanted("gradients"))
    for (const auto& c : gradient_cases())
      report.checks.push_back(
          check_gradients(c, options.gradient_seeds, options.gradient_tolerance, options.tamper_gradient));
  return report;
}

}  // namespace plab
