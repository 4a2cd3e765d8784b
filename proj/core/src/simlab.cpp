// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/simlab.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"
#include "plab/errors.hpp"
#include "plab/rng.hpp"

namespace plab {
namespace {

using ordered_json = nlohmann::ordered_json;

TokenSeq random_tokens(Rng& rng, std::size_t count, std::size_t vocab_size) {
  TokenSeq out(count);
  for (auto& t : out) t = static_cast<Token>(rng.uniform_int(1, vocab_size - 1));
  return out;
}

TokenSeq random_response(Rng& rng, std::size_t length, std::size_t vocab_size) {
  TokenSeq out = random_tokens(rng, length, vocab_size);
  out.push_back(kEos);
  return out;
}

// Seeded choice of `count` ids out of [first, first + n).
std::set<std::uint32_t> choose_ids(Rng& rng, std::uint32_t first, std::size_t n, std::size_t count) {
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), first);
  for (std::size_t i = 0; i < count && i < n; ++i) std::swap(ids[i], ids[rng.uniform_int(i, n - 1)]);
  return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(count, n))};
}

std::size_t majority_count(std::size_t n, double fraction) {
  // Guard against 0.7 * 10 landing a hair above 7.
  return static_cast<std::size_t>(std::ceil(static_cast<double>(n) * fraction - 1e-9));
}

std::string format_double(double x) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), end);
}

ordered_json mean_stderr_json(const MeanStderr& m) {
  return ordered_json{{"mean", m.mean}, {"stderr", m.std_error}, {"n", m.count}};
}

}  // namespace

std::string_view to_string(JudgeDimension dim) {
  switch (dim) {
    case JudgeDimension::Length: return "length";
    case JudgeDimension::DistinctTokens: return "distinct-tokens";
    case JudgeDimension::MarkerPresence: return "marker";
  }
  return "unknown";
}

JudgeDimension parse_judge_dimension(std::string_view name) {
  for (auto d : {JudgeDimension::Length, JudgeDimension::DistinctTokens, JudgeDimension::MarkerPresence})
    if (name == to_string(d)) return d;
  throw ConfigError("unknown judge dimension '" + std::string(name) + "'");
}

const UserPreference* UserGroundTruth::find(std::uint32_t user_id) const {
  for (const auto& u : users)
    if (u.user_id == user_id) return &u;
  return nullptr;
}

std::vector<std::uint32_t> UserGroundTruth::seen_ids() const {
  std::vector<std::uint32_t> ids;
  for (const auto& u : users)
    if (u.seen) ids.push_back(u.user_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::map<std::string, std::vector<std::uint32_t>> UserGroundTruth::groups() const {
  std::map<std::string, std::vector<std::uint32_t>> out;
  for (const auto& u : users)
    if (u.seen) out[u.group].push_back(u.user_id);
  for (auto& [name, ids] : out) std::sort(ids.begin(), ids.end());
  return out;
}

double judge_score(const UserPreference& judge, TokenSpan response) {
  const auto len = static_cast<double>(response_length(response));
  switch (judge.kind) {
    case PreferenceKind::PrefersLonger: return len;
    case PreferenceKind::PrefersShorter: return -len;
    case PreferenceKind::Profile: break;
  }
  double stat = 0.0;
  const auto body = response.first(response_length(response));
  switch (judge.dimension) {
    case JudgeDimension::Length:
      stat = len;
      break;
    case JudgeDimension::DistinctTokens:
      stat = static_cast<double>(std::set<Token>(body.begin(), body.end()).size());
      break;
    case JudgeDimension::MarkerPresence:
      stat = std::find(body.begin(), body.end(), judge.marker) != body.end() ? 1.0 : 0.0;
      break;
  }
  return judge.prefers_high ? stat : -stat;
}

void validate_sim_spec(const SimSpec& spec) {
  if (spec.num_users == 0) throw ConfigError("num_users: must be at least 1");
  if (!(spec.majority_fraction >= 0.5 && spec.majority_fraction < 1.0))
    throw ConfigError("majority_fraction: must lie in [0.5, 1)");
  if (spec.samples_per_user == 0) throw ConfigError("samples_per_user: must be at least 1");
  if (spec.vocab_size < 2) throw ConfigError("vocab_size: need EOS plus at least one content token");
  if (spec.len_short >= spec.len_long) throw ConfigError("len_short: must be below len_long");
}

SimData gen_conflicting_length_dataset(const SimSpec& spec) {
  validate_sim_spec(spec);
  Rng rng(spec.seed);
  SimData out;
  const std::size_t total_users = spec.num_users + spec.unseen_users;
  out.dataset.vocab_size = spec.vocab_size;
  out.dataset.num_users = total_users;

  const auto longer_seen = choose_ids(rng, 1, spec.num_users, majority_count(spec.num_users, spec.majority_fraction));
  const auto longer_unseen = choose_ids(rng, static_cast<std::uint32_t>(spec.num_users + 1), spec.unseen_users,
                                        majority_count(spec.unseen_users, spec.majority_fraction));
  for (std::uint32_t uid = 1; uid <= total_users; ++uid) {
    UserPreference pref;
    pref.user_id = uid;
    pref.seen = uid <= spec.num_users;
    const bool longer = pref.seen ? longer_seen.contains(uid) : longer_unseen.contains(uid);
    pref.kind = longer ? PreferenceKind::PrefersLonger : PreferenceKind::PrefersShorter;
    pref.group = longer ? "majority" : "minority";
    out.truth.users.push_back(pref);
  }

  for (const auto& pref : out.truth.users) {
    for (std::size_t i = 0; i < spec.samples_per_user; ++i) {
      PreferenceSample s;
      s.user.user_id = pref.user_id;
      s.prompt = random_tokens(rng, spec.prompt_len, spec.vocab_size);
      TokenSeq long_resp = random_response(rng, spec.len_long, spec.vocab_size);
      TokenSeq short_resp = random_response(rng, spec.len_short, spec.vocab_size);
      if (pref.kind == PreferenceKind::PrefersLonger) {
        s.chosen = std::move(long_resp);
        s.rejected = std::move(short_resp);
      } else {
        s.chosen = std::move(short_resp);
        s.rejected = std::move(long_resp);
      }
      out.dataset.samples.push_back(std::move(s));
    }
  }
  return out;
}

SimData gen_profile_dataset(const ProfileSpec& spec) {
  if (spec.dimensions.empty()) throw ConfigError("dimensions: need at least one");
  if (spec.vocab_size < 3) throw ConfigError("vocab_size: need at least 3 tokens");
  if (spec.min_len > spec.max_len) throw ConfigError("min_len: must not exceed max_len");
  if (spec.marker == kEos || spec.marker >= spec.vocab_size) throw ConfigError("marker: must be a content token");
  Rng rng(spec.seed);
  SimData out;
  out.dataset.vocab_size = spec.vocab_size;
  out.dataset.num_users = 2 * spec.dimensions.size();
  std::uint32_t uid = 1;
  for (auto dim : spec.dimensions) {
    for (bool high : {true, false}) {
      UserPreference pref;
      pref.user_id = uid++;
      pref.kind = PreferenceKind::Profile;
      pref.dimension = dim;
      pref.prefers_high = high;
      pref.marker = spec.marker;
      pref.group = std::string(to_string(dim)) + (high ? "+" : "-");
      out.truth.users.push_back(pref);
    }
  }
  constexpr int kMaxRedraws = 10000;
  for (const auto& pref : out.truth.users) {
    for (std::size_t i = 0; i < spec.samples_per_user; ++i) {
      PreferenceSample s;
      s.user.user_id = pref.user_id;
      s.prompt = random_tokens(rng, spec.prompt_len, spec.vocab_size);
      for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxRedraws) throw ConfigError("profile judge cannot separate random responses");
        TokenSeq a = random_response(rng, rng.uniform_int(spec.min_len, spec.max_len), spec.vocab_size);
        TokenSeq b = random_response(rng, rng.uniform_int(spec.min_len, spec.max_len), spec.vocab_size);
        const double sa = judge_score(pref, a);
        const double sb = judge_score(pref, b);
        if (sa == sb) continue;
        s.chosen = sa > sb ? std::move(a) : std::move(b);
        s.rejected = sa > sb ? std::move(b) : std::move(a);
        break;
      }
      out.dataset.samples.push_back(std::move(s));
    }
  }
  return out;
}

std::pair<PreferenceDataset, PreferenceDataset> split_train_eval(const PreferenceDataset& dataset,
                                                                 const UserGroundTruth& truth,
                                                                 double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction >= 0.0 && eval_fraction <= 1.0)) throw ConfigError("eval_fraction: must lie in [0, 1]");
  Rng rng(seed);
  PreferenceDataset train{{}, dataset.vocab_size, dataset.num_users};
  PreferenceDataset eval{{}, dataset.vocab_size, dataset.num_users};
  for (const auto& s : dataset.samples) {
    const auto* pref = truth.find(s.user.user_id);
    const bool unseen = pref && !pref->seen;
    const bool to_eval = rng.uniform() < eval_fraction;
    (unseen || to_eval ? eval : train).samples.push_back(s);
  }
  return {std::move(train), std::move(eval)};
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr out;
  out.count = values.size();
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double n = static_cast<double>(values.size());
  out.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return out;
}

EvalReport eval_accuracy(const PolicyParams& policy, const ImplicitUserModel* implicit, const PolicyParams& sft,
                         double beta, const PreferenceDataset& dataset, const UserGroundTruth& truth) {
  if (dataset.samples.empty()) throw DomainError("eval_accuracy: empty dataset");
  EvalReport report;
  std::size_t top_correct = 0, generic_correct = 0;
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> per_user;  // (correct, total)
  for (const auto& s : dataset.samples) {
    const auto* pref = truth.find(s.user.user_id);
    const bool seen = !pref || pref->seen;
    UserInfo user = s.user;
    if (!seen || (implicit && user.user_id > implicit->num_users)) user.user_id = 0;
    const double r1 = implicit_reward(policy, sft, implicit, beta, s.prompt, s.chosen, user);
    const double r2 = implicit_reward(policy, sft, implicit, beta, s.prompt, s.rejected, user);
    const bool correct = r1 > r2;
    if (seen) {
      ++report.top_samples;
      top_correct += correct;
      auto& [c, n] = per_user[s.user.user_id];
      c += correct;
      ++n;
    } else {
      ++report.generic_samples;
      generic_correct += correct;
    }
  }
  if (report.top_samples > 0)
    report.accuracy_top = static_cast<double>(top_correct) / static_cast<double>(report.top_samples);
  if (report.generic_samples > 0)
    report.accuracy_generic = static_cast<double>(generic_correct) / static_cast<double>(report.generic_samples);
  for (const auto& [uid, cn] : per_user)
    report.per_user_accuracy[uid] = static_cast<double>(cn.first) / static_cast<double>(cn.second);
  for (const auto& [name, ids] : truth.groups()) {
    GroupAccuracy g;
    std::vector<double> accs;
    for (auto uid : ids) {
      auto it = report.per_user_accuracy.find(uid);
      if (it == report.per_user_accuracy.end()) continue;
      g.users.push_back(uid);
      accs.push_back(it->second);
    }
    g.accuracy = mean_stderr(accs);
    report.accuracy_average.emplace(name, std::move(g));
  }
  return report;
}

std::vector<UserLengthStats> eval_lengths(const PolicyParams& policy, const ImplicitUserModel* implicit,
                                          std::span<const UserInfo> users, std::span<const TokenSeq> prompts,
                                          std::size_t draws, std::size_t max_len, std::uint64_t seed) {
  if (draws == 0) throw DomainError("eval_lengths: draws must be at least 1");
  std::vector<UserLengthStats> out;
  std::vector<double> lengths;
  for (const auto& user : users) {
    const SoftPrompt sp = user_soft_prompt(policy, implicit, user);
    lengths.clear();
    for (std::size_t p = 0; p < prompts.size(); ++p)
      for (std::size_t k = 0; k < draws; ++k) {
        const auto y = sample_response(policy, sp, prompts[p], max_len, derive_seed(seed, {user.user_id, p, k}));
        lengths.push_back(static_cast<double>(response_length(y)));
      }
    out.push_back({user.user_id, mean_stderr(lengths)});
  }
  return out;
}

double oracle_winrate(std::span<const TokenSeq> responses_a, std::span<const TokenSeq> responses_b,
                      const UserPreference& judge) {
  if (responses_a.size() != responses_b.size()) throw DomainError("oracle_winrate: response lists differ in length");
  if (responses_a.empty()) throw DomainError("oracle_winrate: no prompts");
  std::size_t wins = 0;
  for (std::size_t i = 0; i < responses_a.size(); ++i)
    wins += judge_score(judge, responses_a[i]) >= judge_score(judge, responses_b[i]);
  return static_cast<double>(wins) / static_cast<double>(responses_a.size());
}

TokenSeq best_of_n(const PolicyParams& policy, TokenSpan prompt, std::size_t n, std::size_t max_len,
                   std::uint64_t seed, const ResponseScorer& score) {
  if (n == 0) throw DomainError("best_of_n: n must be at least 1");
  const SoftPrompt none;
  TokenSeq best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TokenSeq y = sample_response(policy, none, prompt, max_len, derive_seed(seed, {i}));
    const double s = score(y);
    if (i == 0 || s > best_score) {
      best = std::move(y);
      best_score = s;
    }
  }
  return best;
}

TokenSeq best_of_n(const RewardHead& head, const PolicyParams& policy, const ImplicitUserModel* implicit,
                   TokenSpan prompt, const UserInfo& user, std::size_t n, std::size_t max_len, std::uint64_t seed) {
  return best_of_n(policy, prompt, n, max_len, seed, [&](TokenSpan y) {
    return reward_score(head, policy, implicit, prompt, y, user);
  });
}

std::string eval_report_json(const EvalReport& report) {
  ordered_json j;
  j["accuracy_top"] = report.accuracy_top;
  j["top_samples"] = report.top_samples;
  j["accuracy_generic"] = report.accuracy_generic ? ordered_json(*report.accuracy_generic) : ordered_json(nullptr);
  j["generic_samples"] = report.generic_samples;
  ordered_json groups = ordered_json::object();
  for (const auto& [name, g] : report.accuracy_average) {
    ordered_json entry = mean_stderr_json(g.accuracy);
    entry["users"] = g.users;
    groups[name] = entry;
  }
  j["accuracy_average"] = groups;
  ordered_json per_user = ordered_json::object();
  for (const auto& [uid, acc] : report.per_user_accuracy) per_user[std::to_string(uid)] = acc;
  j["per_user_accuracy"] = per_user;
  return j.dump(2);
}

void save_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << eval_report_json(report) << '\n';
}

void save_length_table(std::span<const UserLengthStats> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write length table " + path.string());
  out << "user_id,mean,stderr\n";
  for (const auto& r : rows)
    out << r.user_id << ',' << format_double(r.length.mean) << ',' << format_double(r.length.std_error) << '\n';
}

void save_ground_truth(const UserGroundTruth& truth, const std::filesystem::path& path) {
  ordered_json users = ordered_json::array();
  for (const auto& u : truth.users) {
    ordered_json e;
    e["uid"] = u.user_id;
    switch (u.kind) {
      case PreferenceKind::PrefersLonger: e["kind"] = "prefers-longer"; break;
      case PreferenceKind::PrefersShorter: e["kind"] = "prefers-shorter"; break;
      case PreferenceKind::Profile:
        e["kind"] = "profile";
        e["dimension"] = to_string(u.dimension);
        e["pole"] = u.prefers_high ? "high" : "low";
        e["marker"] = u.marker;
        break;
    }
    e["group"] = u.group;
    e["seen"] = u.seen;
    users.push_back(e);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write ground truth " + path.string());
  out << ordered_json{{"users", users}}.dump(2) << '\n';
}

UserGroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ground truth " + path.string());
  UserGroundTruth truth;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& e : j.at("users")) {
      UserPreference u;
      u.user_id = e.at("uid").get<std::uint32_t>();
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "prefers-longer") {
        u.kind = PreferenceKind::PrefersLonger;
      } else if (kind == "prefers-shorter") {
        u.kind = PreferenceKind::PrefersShorter;
      } else if (kind == "profile") {
        u.kind = PreferenceKind::Profile;
        u.dimension = parse_judge_dimension(e.at("dimension").get<std::string>());
        u.prefers_high = e.at("pole").get<std::string>() == "high";
        u.marker = e.value("marker", Token{1});
      } else {
        throw ValidationError("kind", "unknown preference kind '" + kind + "'");
      }
      u.group = e.value("group", std::string{});
      u.seen = e.value("seen", true);
      truth.users.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, e.what());
  }
  return truth;
}

}  // namespace plab
