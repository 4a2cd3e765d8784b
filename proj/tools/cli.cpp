// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plab/corpus.hpp"
#include "plab/errors.hpp"
#include "plab/objectives.hpp"
#include "plab/policy.hpp"
#include "plab/rng.hpp"
#include "plab/simlab.hpp"
#include "plab/trainer.hpp"
#include "plab/usermodel.hpp"
#include "plab/verify.hpp"

namespace plab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Output file names.
constexpr const char* kTrainFile = "dataset.train.jsonl";
constexpr const char* kEvalFile = "dataset.eval.jsonl";
constexpr const char* kTruthFile = "ground_truth.json";
constexpr const char* kPolicyFile = "policy.ckpt";
constexpr const char* kUserModelFile = "usermodel.ckpt";
constexpr const char* kHeadFile = "head.ckpt";
constexpr const char* kTraceFile = "trace.csv";
constexpr const char* kReportFile = "report.json";
constexpr const char* kLengthsFile = "lengths.csv";
constexpr const char* kWinrateFile = "winrate.csv";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Config files are a flat JSON object keyed by long option name. Keys not
// given on the command line are appended as flags, so explicit flags win.
bool flag_present(const std::vector<std::string>& args, const std::string& name) {
  const std::string flag = "--" + name;
  for (const auto& a : args)
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  return false;
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config requires a path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

std::string scalar_to_arg(const std::string& key, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return format_double(v.get<double>());
  throw UsageError("config: unsupported value for '" + key + "'");
}

std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  auto path = find_config_path(args);
  if (!path) return args;
  std::ifstream in(*path);
  if (!in) throw IoError("cannot read config " + *path);
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw UsageError("config " + *path + ": " + e.what());
  }
  if (!cfg.is_object()) throw UsageError("config " + *path + ": expected an object");
  std::vector<std::string> merged = args;
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config") throw UsageError("config: nested 'config' key");
    if (flag_present(args, key)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) merged.push_back("--" + key);
    } else if (value.is_array()) {
      merged.push_back("--" + key);
      for (const auto& v : value) merged.push_back(scalar_to_arg(key, v));
    } else if (!value.is_null()) {
      merged.push_back("--" + key);
      merged.push_back(scalar_to_arg(key, value));
    }
  }
  return merged;
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + out);
  return dir;
}

void save_head(const RewardHead& head, const fs::path& path) {
  ordered_json j;
  j["kind"] = to_string(head.kind);
  j["weight"] = head.weight;
  j["bias"] = head.bias;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

struct Globals {
  std::string out = ".";
  std::optional<std::uint64_t> seed;
};

std::uint64_t require_seed(const Globals& g) {
  if (!g.seed) throw UsageError("--seed is required");
  return *g.seed;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset = "tldr-lengths";
  std::size_t m = 10;
  double majority_fraction = 0.7;
  std::size_t samples_per_user = 0;
  std::size_t vocab = 16;
  std::size_t prompt_len = 4;
  std::size_t len_short = 1;
  std::size_t len_long = 8;
  std::size_t unseen = 4;
  std::size_t dims = 3;
  double eval_fraction = 0.1;
};

void add_simulate(CLI::App& app, SimulateArgs& a) {
  auto* sub = app.add_subcommand("simulate", "Generate a simulated preference dataset");
  sub->add_option("--preset", a.preset, "tldr-lengths | profiles")
      ->check(CLI::IsMember({"tldr-lengths", "profiles"}))
      ->capture_default_str();
  sub->add_option("--m", a.m, "Number of seen users (tldr-lengths)")->capture_default_str();
  sub->add_option("--majority-fraction", a.majority_fraction)->capture_default_str();
  sub->add_option("--samples-per-user", a.samples_per_user, "Default 500 (tldr-lengths) or 200 (profiles)");
  sub->add_option("--vocab", a.vocab)->capture_default_str();
  sub->add_option("--prompt-len", a.prompt_len)->capture_default_str();
  sub->add_option("--len-short", a.len_short)->capture_default_str();
  sub->add_option("--len-long", a.len_long)->capture_default_str();
  sub->add_option("--unseen", a.unseen, "Held-out users (tldr-lengths)")->capture_default_str();
  sub->add_option("--dims", a.dims, "Profile dimensions, 1-3 (profiles)")->capture_default_str();
  sub->add_option("--eval-fraction", a.eval_fraction)->capture_default_str();
}

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out) {
  const std::uint64_t seed = require_seed(g);
  SimData sim;
  if (a.preset == "tldr-lengths") {
    SimSpec spec;
    spec.num_users = a.m;
    spec.majority_fraction = a.majority_fraction;
    spec.samples_per_user = a.samples_per_user ? a.samples_per_user : 500;
    spec.vocab_size = a.vocab;
    spec.prompt_len = a.prompt_len;
    spec.len_short = a.len_short;
    spec.len_long = a.len_long;
    spec.unseen_users = a.unseen;
    spec.seed = seed;
    sim = gen_conflicting_length_dataset(spec);
  } else {
    if (a.dims < 1 || a.dims > 3) throw ValidationError("dims", "must be in [1, 3]");
    ProfileSpec spec;
    spec.dimensions.resize(a.dims);
    spec.samples_per_user = a.samples_per_user ? a.samples_per_user : 200;
    spec.vocab_size = a.vocab;
    spec.prompt_len = a.prompt_len;
    spec.seed = seed;
    sim = gen_profile_dataset(spec);
  }
  if (!(a.eval_fraction > 0.0 && a.eval_fraction < 1.0))
    throw ValidationError("eval-fraction", "must be in (0, 1)");
  auto [train_set, eval_set] = split_train_eval(sim.dataset, sim.truth, a.eval_fraction, derive_seed(seed, {1}));
  const fs::path dir = ensure_out_dir(g.out);
  save_dataset(train_set, dir / kTrainFile);
  save_dataset(eval_set, dir / kEvalFile);
  save_ground_truth(sim.truth, dir / kTruthFile);
  out << "train samples: " << train_set.samples.size() << "\neval samples: " << eval_set.samples.size() << '\n';
  for (const auto& [group, ids] : sim.truth.groups()) {
    out << "group " << group << ":";
    for (auto id : ids) out << ' ' << id;
    out << '\n';
  }
  return kSuccess;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string objective = "p-dpo";
  std::string dataset;
  std::string sft;
  std::string init;
  std::string preset;
  std::string user_model = "individualized";
  std::size_t t_u = 2;
  std::size_t k = 2;
  bool no_generic = false;
  std::string head = "soft-prompt";
  double alpha = 0.5;
  double beta = 0.1;
  std::size_t steps = 1000;
  std::size_t batch_size = 64;
  double step_size = 0.01;
  std::size_t log_every = 10;
  std::size_t d = 8;
  double init_scale = 0.1;
};

struct PresetValues {
  std::string user_model;
  std::size_t t_u;
  double alpha;
  bool no_generic;
  std::size_t k;
};

const std::map<std::string, PresetValues>& train_presets() {
  static const std::map<std::string, PresetValues> presets = {
      {"individualized-tu10", {"individualized", 10, 0.5, false, 2}},
      {"individualized-tu1", {"individualized", 1, 0.5, false, 2}},
      {"individualized-alpha1", {"individualized", 10, 1.0, false, 2}},
      {"individualized-no-generic", {"individualized", 10, 0.5, true, 2}},
      {"cluster-k2", {"cluster", 10, 0.5, false, 2}},
      {"cluster-k5", {"cluster", 10, 0.5, false, 5}},
  };
  return presets;
}

CLI::App* add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Train a policy / reward model on a preference dataset");
  sub->add_option("--objective", a.objective,
                  "sft-mle | vanilla-rm | vanilla-dpo | p-dpo | p-ipo | p-ipo-diff | p-rm")
      ->capture_default_str();
  sub->add_option("--dataset", a.dataset, "Training dataset (JSONL)")->required();
  sub->add_option("--sft", a.sft, "Reference policy checkpoint");
  sub->add_option("--init", a.init, "Initial policy checkpoint (default: --sft, or random for sft-mle)");
  std::vector<std::string> names;
  for (const auto& [name, _] : train_presets()) names.push_back(name);
  sub->add_option("--preset", a.preset, "User-model ablation preset")->check(CLI::IsMember(names));
  sub->add_option("--user-model", a.user_model, "uniform | individualized | cluster")->capture_default_str();
  sub->add_option("--T_u", a.t_u, "User embedding rows")->capture_default_str();
  sub->add_option("--K", a.k, "Number of clusters")->capture_default_str();
  sub->add_flag("--no-generic", a.no_generic, "Individualized model without the generic embedding");
  sub->add_option("--head", a.head, "Reward head for p-rm: soft-prompt | linear")->capture_default_str();
  sub->add_option("--alpha", a.alpha)->capture_default_str();
  sub->add_option("--beta", a.beta)->capture_default_str();
  sub->add_option("--steps", a.steps)->capture_default_str();
  sub->add_option("--batch-size", a.batch_size)->capture_default_str();
  sub->add_option("--step-size", a.step_size)->capture_default_str();
  sub->add_option("--log-every", a.log_every)->capture_default_str();
  sub->add_option("--d", a.d, "Hidden width for a fresh policy")->capture_default_str();
  sub->add_option("--init-scale", a.init_scale, "Scale of a fresh random policy")->capture_default_str();
  return sub;
}

void apply_preset(CLI::App& sub, TrainArgs& a) {
  if (a.preset.empty()) return;
  const PresetValues& p = train_presets().at(a.preset);
  if (sub.count("--user-model") == 0) a.user_model = p.user_model;
  if (sub.count("--T_u") == 0) a.t_u = p.t_u;
  if (sub.count("--alpha") == 0) a.alpha = p.alpha;
  if (sub.count("--no-generic") == 0) a.no_generic = p.no_generic;
  if (sub.count("--K") == 0) a.k = p.k;
}

bool uses_user_model(ObjectiveKind k) {
  return k == ObjectiveKind::PDPO || k == ObjectiveKind::PIPOAsWritten || k == ObjectiveKind::PIPODifference ||
         k == ObjectiveKind::PRM;
}

int cmd_train(const Globals& g, const TrainArgs& a, std::ostream& out) {
  const std::uint64_t seed = require_seed(g);
  TrainConfig cfg;
  try {
    cfg.objective.kind = parse_objective_kind(a.objective);
  } catch (const std::exception&) {
    throw ValidationError("objective", "unknown objective '" + a.objective + "'");
  }
  cfg.objective.alpha = a.alpha;
  cfg.objective.beta = a.beta;
  cfg.objective.rm_aggregation = parse_reward_head_kind(a.head);
  cfg.steps = a.steps;
  cfg.batch_size = a.batch_size;
  cfg.step_size = a.step_size;
  cfg.log_every = a.log_every;
  cfg.seed = derive_seed(seed, {3});
  validate_objective(cfg.objective);
  validate_train_config(cfg);

  const PreferenceDataset data = load_dataset(a.dataset);
  const ObjectiveKind kind = cfg.objective.kind;

  PolicyParams sft;
  if (!a.sft.empty()) {
    sft = load_policy(a.sft);
  } else if (kind != ObjectiveKind::SftMle) {
    throw UsageError("--sft is required for objective " + a.objective);
  }

  ParameterBundle init;
  if (!a.init.empty()) {
    init.policy = load_policy(a.init);
  } else if (!a.sft.empty()) {
    init.policy = sft;
  } else {
    init.policy = PolicyParams::random(data.vocab_size, a.d, derive_seed(seed, {1}), a.init_scale);
  }
  if (kind == ObjectiveKind::SftMle && a.sft.empty()) sft = init.policy;
  if (init.policy.vocab_size() != data.vocab_size)
    throw ValidationError("vocab_size", "policy vocabulary does not match the dataset");

  const std::size_t d = init.policy.width();
  if (uses_user_model(kind)) {
    const UserModelVariant variant = parse_user_model_variant(a.user_model);
    const std::uint64_t um_seed = derive_seed(seed, {2});
    switch (variant) {
      case UserModelVariant::Uniform:
        init.user_model = ImplicitUserModel::uniform(data.num_users, a.t_u, d, um_seed);
        break;
      case UserModelVariant::Individualized:
        init.user_model = ImplicitUserModel::individualized(data.num_users, a.t_u, d, um_seed, !a.no_generic);
        break;
      case UserModelVariant::Cluster:
        init.user_model = ImplicitUserModel::cluster(data.num_users, a.t_u, d, a.k, um_seed);
        break;
    }
  }
  if (kind == ObjectiveKind::VanillaRM)
    init.head = RewardHead::soft_prompt(d);
  else if (kind == ObjectiveKind::PRM)
    init.head = cfg.objective.rm_aggregation == RewardHeadKind::Linear ? RewardHead::linear()
                                                                       : RewardHead::soft_prompt(d);

  TrainReport report = train(data, std::move(init), sft, cfg);

  const fs::path dir = ensure_out_dir(g.out);
  save_policy(report.params.policy, dir / kPolicyFile);
  if (report.params.user_model) save_user_model(*report.params.user_model, dir / kUserModelFile);
  if (report.params.head) save_head(*report.params.head, dir / kHeadFile);
  write_loss_trace_csv(report, dir / kTraceFile);
  const double final_loss = report.loss_trace.empty() ? 0.0 : report.loss_trace.back().second;
  out << "final loss: " << format_double(final_loss) << '\n';
  return kSuccess;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string policy;
  std::string usermodel;
  std::string sft;
  std::string dataset;
  std::string ground_truth;
  double beta = 0.1;
  bool lengths = false;
  std::vector<std::string> winrate;
  std::size_t prompts = 50;
  std::size_t draws = 20;
  std::size_t max_len = 16;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* sub = app.add_subcommand("evaluate", "Evaluate checkpoints");
  sub->add_option("--policy", a.policy, "Policy checkpoint");
  sub->add_option("--usermodel", a.usermodel, "User-model checkpoint");
  sub->add_option("--sft", a.sft, "Reference policy checkpoint (accuracy report)");
  sub->add_option("--dataset", a.dataset, "Evaluation dataset (JSONL)")->required();
  sub->add_option("--ground-truth", a.ground_truth, "Ground-truth user file");
  sub->add_option("--beta", a.beta)->capture_default_str();
  sub->add_flag("--lengths", a.lengths, "Write the per-user sampled length table");
  sub->add_option("--winrate", a.winrate, "Two policy checkpoints to compare")->expected(2);
  sub->add_option("--prompts", a.prompts, "Distinct evaluation prompts")->capture_default_str();
  sub->add_option("--draws", a.draws, "Samples per prompt")->capture_default_str();
  sub->add_option("--max-len", a.max_len)->capture_default_str();
}

struct LoadedBundle {
  PolicyParams policy;
  std::optional<ImplicitUserModel> user_model;
  const ImplicitUserModel* implicit() const { return user_model ? &*user_model : nullptr; }
};

LoadedBundle load_bundle(const fs::path& policy_path, const fs::path& usermodel_path) {
  LoadedBundle b;
  b.policy = load_policy(policy_path);
  if (!usermodel_path.empty()) b.user_model = load_user_model(usermodel_path);
  return b;
}

std::vector<TokenSeq> eval_prompts(const PreferenceDataset& data, std::size_t limit) {
  std::vector<TokenSeq> prompts;
  std::set<TokenSeq> seen;
  for (const auto& s : data.samples) {
    if (prompts.size() >= limit) break;
    if (seen.insert(s.prompt).second) prompts.push_back(s.prompt);
  }
  return prompts;
}

std::vector<UserInfo> eval_users(const std::optional<UserGroundTruth>& truth) {
  std::vector<UserInfo> users{{0, {}}};
  if (truth)
    for (auto id : truth->seen_ids()) users.push_back({id, {}});
  return users;
}

int cmd_evaluate(const Globals& g, const EvaluateArgs& a, std::ostream& out) {
  const PreferenceDataset data = load_dataset(a.dataset);
  std::optional<UserGroundTruth> truth;
  if (!a.ground_truth.empty()) truth = load_ground_truth(a.ground_truth);
  const bool report = !a.sft.empty() && truth.has_value();
  if (!report && !a.lengths && a.winrate.empty())
    throw UsageError("nothing to evaluate: give --sft and --ground-truth, --lengths, or --winrate");
  if ((report || a.lengths) && a.policy.empty()) throw UsageError("--policy is required");
  if (!a.winrate.empty() && !truth) throw UsageError("--winrate requires --ground-truth");

  const fs::path dir = ensure_out_dir(g.out);
  std::optional<LoadedBundle> bundle;
  if (!a.policy.empty()) bundle = load_bundle(a.policy, a.usermodel);

  if (report) {
    const PolicyParams sft = load_policy(a.sft);
    EvalReport r = eval_accuracy(bundle->policy, bundle->implicit(), sft, a.beta, data, *truth);
    save_eval_report(r, dir / kReportFile);
    out << eval_report_json(r) << '\n';
  }

  const std::vector<TokenSeq> prompts = eval_prompts(data, a.prompts);
  if (a.lengths) {
    const std::uint64_t seed = require_seed(g);
    auto rows = eval_lengths(bundle->policy, bundle->implicit(), eval_users(truth), prompts, a.draws, a.max_len,
                             derive_seed(seed, {4}));
    save_length_table(rows, dir / kLengthsFile);
    for (const auto& r : rows)
      out << "user " << r.user_id << " length " << format_double(r.length.mean) << " +- "
          << format_double(r.length.std_error) << '\n';
  }

  if (!a.winrate.empty()) {
    const std::uint64_t seed = require_seed(g);
    auto sibling = [](const fs::path& p) {
      fs::path um = p.parent_path() / kUserModelFile;
      return fs::exists(um) ? um : fs::path{};
    };
    const LoadedBundle lhs = load_bundle(a.winrate[0], sibling(a.winrate[0]));
    const LoadedBundle rhs = load_bundle(a.winrate[1], sibling(a.winrate[1]));
    std::ofstream csv(dir / kWinrateFile, std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot write " + (dir / kWinrateFile).string());
    csv << "user_id,group,winrate_a,winrate_b\n";
    for (auto id : truth->seen_ids()) {
      const UserPreference& judge = *truth->find(id);
      const UserInfo user{id, {}};
      const SoftPrompt sp_a = user_soft_prompt(lhs.policy, lhs.implicit(), user);
      const SoftPrompt sp_b = user_soft_prompt(rhs.policy, rhs.implicit(), user);
      std::vector<TokenSeq> ra, rb;
      for (std::size_t p = 0; p < prompts.size(); ++p) {
        for (std::size_t k = 0; k < a.draws; ++k) {
          const std::uint64_t s = derive_seed(seed, {5, id, p, k});
          ra.push_back(sample_response(lhs.policy, sp_a, prompts[p], a.max_len, s));
          rb.push_back(sample_response(rhs.policy, sp_b, prompts[p], a.max_len, s));
        }
      }
      const double wa = oracle_winrate(ra, rb, judge);
      const double wb = oracle_winrate(rb, ra, judge);
      csv << id << ',' << judge.group << ',' << format_double(wa) << ',' << format_double(wb) << '\n';
      out << "user " << id << " (" << judge.group << ") winrate a " << format_double(wa) << " b "
          << format_double(wb) << '\n';
    }
  }
  return kSuccess;
}

// ---------------------------------------------------------------- verify / gradcheck

struct VerifyArgs {
  std::string only;
};

struct GradcheckArgs {
  std::string objective;
  std::size_t seeds = 20;
  double tolerance = 1e-4;
};

void print_checks(const std::vector<CheckResult>& checks, std::ostream& out) {
  for (const auto& c : checks)
    out << (c.passed ? "PASS " : "FAIL ") << c.name << (c.detail.empty() ? "" : "  " + c.detail) << '\n';
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  VerifyOptions opts;
  opts.only = a.only;
  VerifyReport r = run_verify(opts);
  for (const auto& t : r.tables) out << t << '\n';
  print_checks(r.checks, out);
  return r.all_passed() ? kSuccess : kVerificationFailure;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<CheckResult> results;
  for (const auto& c : gradient_cases()) {
    if (!a.objective.empty() && c.name != a.objective && std::string(to_string(c.objective.kind)) != a.objective)
      continue;
    results.push_back(check_gradients(c, a.seeds, a.tolerance));
  }
  if (results.empty()) throw UsageError("no gradient case matches '" + a.objective + "'");
  print_checks(results, out);
  for (const auto& r : results)
    if (!r.passed) return kVerificationFailure;
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"plab: personalized preference learning lab", "plab"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; keys are long option names");
  app.add_option("--seed", g.seed, "Base random seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();

  SimulateArgs sim_args;
  TrainArgs train_args;
  EvaluateArgs eval_args;
  VerifyArgs verify_args;
  GradcheckArgs grad_args;
  add_simulate(app, sim_args);
  CLI::App* train_cmd = add_train(app, train_args);
  add_evaluate(app, eval_args);
  app.add_subcommand("verify", "Run the verification suite")
      ->add_option("--only", verify_args.only, "lemma1 | lemma2 | reductions | gradients");
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_option("--objective", grad_args.objective, "Objective or case name (default: all)");
  gc->add_option("--seeds", grad_args.seeds)->capture_default_str();
  gc->add_option("--tolerance", grad_args.tolerance)->capture_default_str();

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kSuccess : kUsageError;
    }
    apply_preset(*train_cmd, train_args);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") return cmd_simulate(g, sim_args, out);
    if (cmd == "train") return cmd_train(g, train_args, out);
    if (cmd == "evaluate") return cmd_evaluate(g, eval_args, out);
    if (cmd == "verify") return cmd_verify(verify_args, out);
    return cmd_gradcheck(grad_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const ValidationError& e) {
    err << "invalid " << e.field() << ": " << e.what() << '\n';
    return kUsageError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsageError;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIoError;
  } catch (const ParseError& e) {
    err << "parse error at line " << e.line() << ": " << e.what() << '\n';
    return kIoError;
  } catch (const NumericError& e) {
    err << "numeric error at step " << e.step() << ": " << e.what() << '\n';
    return kVerificationFailure;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  }
}

}  // namespace plab::cli
