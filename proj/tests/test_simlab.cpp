// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "oracles.hpp"
#include "plab/errors.hpp"
#include "plab/objectives.hpp"
#include "plab/rng.hpp"
#include "plab/simlab.hpp"
#include "plab/trainer.hpp"
#include "test_util.hpp"

using namespace plab;

namespace {

SimSpec small_spec(std::size_t m, double fraction, std::uint64_t seed) {
  SimSpec spec;
  spec.num_users = m;
  spec.majority_fraction = fraction;
  spec.samples_per_user = 20;
  spec.seed = seed;
  return spec;
}

std::size_t count_kind(const UserGroundTruth& t, PreferenceKind k) {
  return static_cast<std::size_t>(
      std::count_if(t.users.begin(), t.users.end(), [k](const UserPreference& u) { return u.kind == k && u.seen; }));
}

UserPreference longer_judge() {
  UserPreference u;
  u.user_id = 1;
  u.kind = PreferenceKind::PrefersLonger;
  return u;
}

TokenSeq resp(std::size_t len) {
  TokenSeq y(len, 1);
  y.push_back(kEos);
  return y;
}

}  // namespace

TEST_CASE("conflicting length dataset") {
  SUBCASE("ten users at 0.7 split seven to three") {
    SimData sim = gen_conflicting_length_dataset(small_spec(10, 0.7, 1));
    CHECK(count_kind(sim.truth, PreferenceKind::PrefersLonger) == 7);
    CHECK(count_kind(sim.truth, PreferenceKind::PrefersShorter) == 3);
    auto groups = sim.truth.groups();
    CHECK(groups["majority"].size() == 7);
    CHECK(groups["minority"].size() == 3);
    CHECK(sim.dataset.samples.size() == 200);
    CHECK(sim.dataset.num_users == 10);
    CHECK_NOTHROW(validate_dataset(sim.dataset));
    for (const auto& s : sim.dataset.samples) {
      const auto* u = sim.truth.find(s.user.user_id);
      REQUIRE(u != nullptr);
      if (u->kind == PreferenceKind::PrefersShorter) CHECK(s.chosen.size() < s.rejected.size());
      else CHECK(s.chosen.size() > s.rejected.size());
    }
  }
  SUBCASE("forty users at 0.65 split 26 to 14") {
    SimData sim = gen_conflicting_length_dataset(small_spec(40, 0.65, 2));
    CHECK(count_kind(sim.truth, PreferenceKind::PrefersLonger) == 26);
    CHECK(count_kind(sim.truth, PreferenceKind::PrefersShorter) == 14);
  }
  SUBCASE("unseen users follow the seen ones") {
    SimSpec spec = small_spec(10, 0.7, 3);
    spec.unseen_users = 4;
    SimData sim = gen_conflicting_length_dataset(spec);
    CHECK(sim.dataset.num_users == 14);
    CHECK(sim.truth.seen_ids().size() == 10);
    for (std::uint32_t id = 11; id <= 14; ++id) CHECK_FALSE(sim.truth.find(id)->seen);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(gen_conflicting_length_dataset(small_spec(10, 1.0, 1)), ConfigError);
    CHECK_THROWS_AS(gen_conflicting_length_dataset(small_spec(10, 0.4, 1)), ConfigError);
    SimSpec bad = small_spec(10, 0.7, 1);
    bad.len_short = 8;
    CHECK_THROWS_AS(gen_conflicting_length_dataset(bad), ConfigError);
  }
  SUBCASE("seeded") {
    CHECK(gen_conflicting_length_dataset(small_spec(10, 0.7, 4)).dataset ==
          gen_conflicting_length_dataset(small_spec(10, 0.7, 4)).dataset);
  }
}

TEST_CASE("profile dataset") {
  ProfileSpec spec;
  spec.samples_per_user = 50;
  spec.seed = 5;
  SimData sim = gen_profile_dataset(spec);
  CHECK(sim.truth.users.size() == 6);
  CHECK(sim.dataset.num_users == 6);
  CHECK(sim.truth.groups().size() == 6);
  CHECK_NOTHROW(validate_dataset(sim.dataset));
  for (const auto& s : sim.dataset.samples) {
    const UserPreference& judge = *sim.truth.find(s.user.user_id);
    CHECK(judge_score(judge, s.chosen) > judge_score(judge, s.rejected));
  }
  spec.dimensions = {JudgeDimension::DistinctTokens};
  CHECK(gen_profile_dataset(spec).truth.users.size() == 2);
}

TEST_CASE("property: re-judging reproduces every label") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SimSpec spec = small_spec(6, 0.5 + 0.1 * static_cast<double>(seed % 4), seed);
    spec.unseen_users = 2;
    SimData sim = gen_conflicting_length_dataset(spec);
    for (const auto& s : sim.dataset.samples) {
      const UserPreference& judge = *sim.truth.find(s.user.user_id);
      CHECK(judge_score(judge, s.chosen) > judge_score(judge, s.rejected));
    }
  }
}

TEST_CASE("split_train_eval") {
  SimSpec spec = small_spec(10, 0.7, 6);
  spec.samples_per_user = 200;
  spec.unseen_users = 2;
  SimData sim = gen_conflicting_length_dataset(spec);
  auto [tr, ev] = split_train_eval(sim.dataset, sim.truth, 0.1, 7);
  CHECK(tr.samples.size() + ev.samples.size() == sim.dataset.samples.size());
  for (const auto& s : tr.samples) CHECK(sim.truth.find(s.user.user_id)->seen);
  std::size_t unseen_in_eval = 0;
  for (const auto& s : ev.samples) unseen_in_eval += !sim.truth.find(s.user.user_id)->seen;
  CHECK(unseen_in_eval == 400);
  const double seen_eval = static_cast<double>(ev.samples.size() - unseen_in_eval) / 2000.0;
  CHECK(seen_eval == doctest::Approx(0.1).epsilon(0.3));
  auto again = split_train_eval(sim.dataset, sim.truth, 0.1, 7);
  CHECK(again.first == tr);
}

TEST_CASE("mean_stderr") {
  const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
  MeanStderr m = mean_stderr(xs);
  CHECK(m.mean == 2.5);
  CHECK(m.std_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(m.count == 4);
  const std::vector<double> same{3.0, 3.0, 3.0};
  CHECK(mean_stderr(same).std_error == 0.0);
}

TEST_CASE("eval_accuracy") {
  SimData sim = gen_conflicting_length_dataset(small_spec(10, 0.7, 8));
  const std::size_t vocab = sim.dataset.vocab_size;

  SUBCASE("untrained policy ties everywhere and scores zero") {
    const PolicyParams sft = PolicyParams::random(vocab, 4, 9);
    EvalReport r = eval_accuracy(sft, nullptr, sft, 0.5, sim.dataset, sim.truth);
    CHECK(r.accuracy_top == 0.0);
    CHECK(r.top_samples == 200);
    CHECK_FALSE(r.accuracy_generic.has_value());
  }

  SUBCASE("hand-built optimum scores one") {
    // Dimension 0 of the hidden state carries the user's sign into the EOS logit.
    PolicyParams policy = PolicyParams::zeros(vocab, 2);
    policy.out_map(kEos, 0) = 50.0;
    const PolicyParams sft = policy;
    ImplicitUserModel m = ImplicitUserModel::individualized(10, 1, 2, 0, true, 0.0);
    for (const auto& u : sim.truth.users) m.offsets(u.user_id, 0) = u.kind == PreferenceKind::PrefersShorter ? 1.0 : -1.0;
    EvalReport r = eval_accuracy(policy, &m, sft, 0.5, sim.dataset, sim.truth);
    CHECK(r.accuracy_top == 1.0);
    CHECK(r.accuracy_average.at("majority").accuracy.mean == 1.0);
    CHECK(r.accuracy_average.at("minority").accuracy.mean == 1.0);
    CHECK(r.accuracy_average.at("minority").users.size() == 3);
    for (const auto& [uid, acc] : r.per_user_accuracy) CHECK(acc == 1.0);

    // The same bundle with every user sent to the generic embedding ties again.
    SimSpec spec = small_spec(10, 0.7, 8);
    spec.unseen_users = 2;
    SimData with_unseen = gen_conflicting_length_dataset(spec);
    ImplicitUserModel m12 = ImplicitUserModel::individualized(12, 1, 2, 0, true, 0.0);
    EvalReport g = eval_accuracy(policy, &m12, sft, 0.5, with_unseen.dataset, with_unseen.truth);
    REQUIRE(g.accuracy_generic.has_value());
    CHECK(g.generic_samples == 40);
    CHECK(*g.accuracy_generic == 0.0);
  }
}

TEST_CASE("eval_lengths") {
  const std::vector<TokenSeq> prompts{{1, 2}, {3}, {2, 2, 1}};
  const std::vector<UserInfo> generic{{0, {}}};

  PolicyParams forced = PolicyParams::zeros(6, 2);
  forced.out_bias[kEos] = 1000.0;
  auto rows = eval_lengths(forced, nullptr, generic, prompts, 10, 16, 1);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].length.mean == 0.0);
  CHECK(rows[0].length.std_error == 0.0);

  PolicyParams suppressed = PolicyParams::zeros(6, 2);
  suppressed.out_bias[kEos] = -1000.0;
  rows = eval_lengths(suppressed, nullptr, generic, prompts, 10, 7, 2);
  CHECK(rows[0].length.mean == 6.0);
  CHECK(rows[0].length.std_error == 0.0);

  // Uniform policy over 4 tokens: geometric(1/4) lengths cut off at 5.
  const PolicyParams uniform = PolicyParams::zeros(4, 2);
  double expected = 0.0;
  for (const auto& [y, p] : oracle::sample_space(uniform, Matrix{}, TokenSeq{1}, 6))
    expected += p * static_cast<double>(response_length(y));
  double closed_form = 0.0;
  for (int k = 1; k <= 5; ++k) closed_form += std::pow(0.75, k);
  CHECK(expected == doctest::Approx(closed_form).epsilon(1e-12));
  rows = eval_lengths(uniform, nullptr, generic, prompts, 5000, 6, 3);
  CHECK(std::abs(rows[0].length.mean - expected) <= 4.0 * rows[0].length.std_error);
  CHECK(eval_lengths(uniform, nullptr, generic, prompts, 50, 6, 3)[0].length.mean ==
        eval_lengths(uniform, nullptr, generic, prompts, 50, 6, 3)[0].length.mean);
}

TEST_CASE("oracle_winrate") {
  const UserPreference judge = longer_judge();
  const std::vector<TokenSeq> a{resp(3), resp(1), resp(4), resp(0)};
  CHECK(oracle_winrate(a, a, judge) == 1.0);

  const std::vector<TokenSeq> shorter{resp(2), resp(0), resp(3), resp(0)}, longer{resp(5), resp(5), resp(5), resp(5)};
  const std::vector<TokenSeq> a_strict{resp(3), resp(1), resp(4), resp(1)};
  CHECK(oracle_winrate(a_strict, shorter, judge) == 1.0);
  CHECK(oracle_winrate(shorter, a_strict, judge) == 0.0);

  const std::vector<TokenSeq> b_mixed{resp(2), resp(0), resp(4), resp(1)};  // win, win, tie, loss
  CHECK(oracle_winrate(a, b_mixed, judge) == 0.75);
  const std::vector<TokenSeq> b_three{resp(2), resp(0), resp(3), resp(0)};  // win, win, win, tie
  CHECK(oracle_winrate(a, b_three, judge) == 1.0);
  CHECK(oracle_winrate(a, longer, judge) == 0.0);
  CHECK_THROWS_AS(oracle_winrate(a, std::vector<TokenSeq>{resp(1)}, judge), DomainError);
}

TEST_CASE("best_of_n") {
  PolicyParams policy = PolicyParams::random(8, 3, 10, 0.5);
  policy.out_bias[kEos] = std::log(2.0);
  const TokenSeq prompt{1, 2};
  auto len_score = [](TokenSpan y) { return -static_cast<double>(response_length(y)); };

  CHECK(best_of_n(policy, prompt, 1, 10, 11, len_score) == sample_response(policy, Matrix{}, prompt, 10, derive_seed(11, {0})));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::size_t shortest = 100;
    for (std::size_t i = 0; i < 8; ++i)
      shortest = std::min(shortest, response_length(sample_response(policy, Matrix{}, prompt, 10, derive_seed(seed, {i}))));
    CHECK(response_length(best_of_n(policy, prompt, 8, 10, seed, len_score)) == shortest);
  }
  CHECK_THROWS_AS(best_of_n(policy, prompt, 0, 10, 1, len_score), DomainError);
}

TEST_CASE("best_of_n with a trained personalized reward model") {
  SimSpec spec = small_spec(4, 0.5, 12);
  spec.samples_per_user = 100;
  SimData sim = gen_conflicting_length_dataset(spec);
  const std::size_t vocab = sim.dataset.vocab_size, d = 4;

  ParameterBundle init;
  init.policy = PolicyParams::random(vocab, d, 13, 0.5);
  init.policy.out_bias[kEos] = std::log(5.0);  // about one EOS in four steps
  init.user_model = ImplicitUserModel::individualized(4, 1, d, 14);
  init.head = RewardHead::soft_prompt(d);
  TrainConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 64;
  cfg.step_size = 0.05;
  cfg.seed = 15;
  cfg.objective = {0.5, 0.5, ObjectiveKind::PRM};
  TrainReport r = train(sim.dataset, init, init.policy, cfg);

  const UserPreference* shorter = nullptr;
  for (const auto& u : sim.truth.users)
    if (u.kind == PreferenceKind::PrefersShorter) shorter = &u;
  REQUIRE(shorter != nullptr);
  const UserInfo user{shorter->user_id, {}};
  const TokenSeq prompt{3, 1, 4, 1};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<std::size_t> lengths;
    for (std::size_t i = 0; i < 16; ++i)
      lengths.push_back(response_length(sample_response(r.params.policy, Matrix{}, prompt, 16, derive_seed(seed, {i}))));
    std::sort(lengths.begin(), lengths.end());
    const double median = 0.5 * static_cast<double>(lengths[7] + lengths[8]);
    const TokenSeq pick = best_of_n(*r.params.head, r.params.policy, &*r.params.user_model, prompt, user, 16, 16, seed);
    CHECK(static_cast<double>(response_length(pick)) <= median);
  }
}

TEST_CASE("report and table files") {
  testing::TempDir dir("simlab");
  EvalReport r;
  r.accuracy_top = 0.75;
  r.top_samples = 4;
  r.per_user_accuracy = {{1, 1.0}, {2, 0.5}};
  r.accuracy_average["majority"] = {{1, 2}, {0.75, 0.25, 2}};
  save_eval_report(r, dir / "report.json");
  auto j = nlohmann::json::parse(testing::read_file(dir / "report.json"));
  CHECK(j["accuracy_top"] == 0.75);
  CHECK(j["accuracy_generic"].is_null());
  CHECK(j["accuracy_average"]["majority"]["users"] == nlohmann::json::array({1, 2}));
  CHECK(j["accuracy_average"]["majority"]["mean"] == 0.75);
  CHECK(j["per_user_accuracy"]["2"] == 0.5);

  const std::vector<UserLengthStats> rows{{0, {0.0, 0.0, 5}}, {3, {1.5, 0.25, 5}}};
  save_length_table(rows, dir / "lengths.csv");
  CHECK(testing::read_file(dir / "lengths.csv") == "user_id,mean,stderr\n0,0,0\n3,1.5,0.25\n");
}

TEST_CASE("ground truth round trip") {
  testing::TempDir dir("simlab");
  SimSpec spec = small_spec(10, 0.7, 16);
  spec.unseen_users = 3;
  UserGroundTruth t = gen_conflicting_length_dataset(spec).truth;
  save_ground_truth(t, dir / "gt.json");
  CHECK(load_ground_truth(dir / "gt.json") == t);
  ProfileSpec ps;
  ps.samples_per_user = 1;
  UserGroundTruth p = gen_profile_dataset(ps).truth;
  save_ground_truth(p, dir / "gt2.json");
  CHECK(load_ground_truth(dir / "gt2.json") == p);
}
