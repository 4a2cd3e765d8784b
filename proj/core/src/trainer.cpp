// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/trainer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "plab/errors.hpp"
#include "plab/rng.hpp"

namespace plab {
namespace {

bool all_finite(ParameterBundle& b) {
  for (const auto& t : trainable_tensors(b))
    for (double x : t.values)
      if (!std::isfinite(x)) return false;
  return true;
}

// Position (tensor, index) of the k-th trainable scalar.
struct Coordinate {
  std::size_t tensor;
  std::size_t index;
};

std::vector<Coordinate> enumerate_coordinates(ParameterBundle& b) {
  std::vector<Coordinate> out;
  const auto tensors = trainable_tensors(b);
  for (std::size_t t = 0; t < tensors.size(); ++t)
    for (std::size_t i = 0; i < tensors[t].values.size(); ++i) out.push_back({t, i});
  return out;
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.steps == 0) throw ConfigError("steps must be at least 1");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(cfg.step_size >= 0.0) || !std::isfinite(cfg.step_size)) throw ConfigError("step_size must be >= 0");
  if (cfg.log_every == 0) throw ConfigError("log_every must be at least 1");
  validate_objective(cfg.objective);
}

void check_bundle_compatible(const ObjectiveConfig& objective, const ParameterBundle& bundle,
                             const PolicyParams& sft) {
  validate_policy(bundle.policy);
  const auto kind = objective.kind;
  const bool needs_ref = kind == ObjectiveKind::VanillaDPO || kind == ObjectiveKind::PDPO ||
                         kind == ObjectiveKind::PIPOAsWritten || kind == ObjectiveKind::PIPODifference;
  if (needs_ref && (sft.vocab_size() != bundle.policy.vocab_size()))
    throw ConfigError("reference policy vocabulary differs from the trained policy");
  const bool needs_user = kind == ObjectiveKind::PDPO || kind == ObjectiveKind::PIPOAsWritten ||
                          kind == ObjectiveKind::PIPODifference || kind == ObjectiveKind::PRM;
  if (needs_user) {
    if (!bundle.user_model) throw ConfigError(std::string(to_string(kind)) + " requires a user model");
    validate_user_model(*bundle.user_model);
    if (bundle.user_model->width != bundle.policy.width())
      throw ConfigError("user model width does not match the policy");
  }
  const bool needs_head = kind == ObjectiveKind::PRM || kind == ObjectiveKind::VanillaRM;
  if (needs_head) {
    if (!bundle.head) throw ConfigError(std::string(to_string(kind)) + " requires a reward head");
    if (bundle.head->kind != objective.rm_aggregation)
      throw ConfigError("reward head kind does not match the objective's aggregation");
    if (bundle.head->kind == RewardHeadKind::SoftPrompt && bundle.head->weight.size() != bundle.policy.width())
      throw ConfigError("reward head width does not match the policy");
    if (bundle.head->kind == RewardHeadKind::Linear && (!bundle.user_model || bundle.user_model->user_tokens != 1))
      throw ConfigError("linear reward head requires T_u = 1");
  }
}

RmsScaledDescent::RmsScaledDescent(const ParameterBundle& shape, double step_size, double decay, double damping)
    : step_size_(step_size), decay_(decay), damping_(damping), second_moment_(trainable_size(shape), 0.0) {}

void RmsScaledDescent::step(ParameterBundle& params, ParameterBundle& grad) {
  ++t_;
  const double correction = 1.0 - std::pow(decay_, static_cast<double>(t_));
  auto p_tensors = trainable_tensors(params);
  auto g_tensors = trainable_tensors(grad);
  if (p_tensors.size() != g_tensors.size()) throw ConfigError("gradient bundle shape differs from parameters");
  std::size_t k = 0;
  for (std::size_t t = 0; t < p_tensors.size(); ++t) {
    auto p = p_tensors[t].values;
    auto g = g_tensors[t].values;
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      double& v = second_moment_[k];
      v = decay_ * v + (1.0 - decay_) * g[i] * g[i];
      p[i] -= step_size_ * g[i] / (std::sqrt(v / correction) + damping_);
    }
  }
}

TrainReport train(const PreferenceDataset& dataset, ParameterBundle init, const PolicyParams& sft,
                  const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (dataset.samples.empty()) throw ConfigError("training dataset is empty");
  check_bundle_compatible(cfg.objective, init, sft);
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.params = std::move(init);
  RmsScaledDescent optimizer(report.params, cfg.step_size);
  Rng rng(cfg.seed);

  const std::size_t n = dataset.samples.size();
  const bool full_batch = n <= cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a shuffle before the first mini-batch
  std::vector<PreferenceSample> batch;

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Batch view;
    if (full_batch) {
      view = dataset.samples;
    } else {
      if (cursor >= n) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
        cursor = 0;
      }
      const std::size_t take = std::min(cfg.batch_size, n - cursor);
      batch.clear();
      for (std::size_t i = 0; i < take; ++i) batch.push_back(dataset.samples[order[cursor + i]]);
      cursor += take;
      view = batch;
    }

    LossAndGrad lg = evaluate_objective(cfg.objective, report.params, sft, view);
    if (!std::isfinite(lg.loss)) throw NumericError(step, "non-finite loss");
    if (!all_finite(lg.grad)) throw NumericError(step, "non-finite gradient");
    if (step % cfg.log_every == 0) report.loss_trace.emplace_back(step, lg.loss);
    optimizer.step(report.params, lg.grad);
  }
  report.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

void write_loss_trace_csv(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write loss trace " + path.string());
  out << "step,loss\n";
  std::array<char, 32> buf{};
  for (const auto& [step, loss] : report.loss_trace) {
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), loss);
    out << step << ',';
    out.write(buf.data(), end - buf.data());
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t checksum(const PolicyParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::span<const double> xs) {
    for (double x : xs) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &x, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(params.embed.flat());
  mix(params.out_map.flat());
  mix(params.out_bias);
  return h;
}

double grad_check(const LossFn& loss, const ParameterBundle& at, double epsilon, std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw DomainError("grad_check: epsilon must be positive");
  ParameterBundle probe = at;
  LossAndGrad base = loss(probe);
  auto analytic = trainable_tensors(base.grad);
  auto coords = enumerate_coordinates(probe);
  auto tensors = trainable_tensors(probe);

  constexpr std::size_t kFullCheckLimit = 5000;
  constexpr std::size_t kSampled = 256;
  if (coords.size() > kFullCheckLimit) {
    Rng rng(seed);
    for (std::size_t i = 0; i < kSampled; ++i) std::swap(coords[i], coords[rng.uniform_int(i, coords.size() - 1)]);
    coords.resize(kSampled);
  }

  double worst = 0.0;
  for (const auto& c : coords) {
    double& x = tensors[c.tensor].values[c.index];
    const double saved = x;
    x = saved + epsilon;
    const double up = loss(probe).loss;
    x = saved - epsilon;
    const double down = loss(probe).loss;
    x = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[c.tensor].values[c.index];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check(const ObjectiveConfig& objective, const ParameterBundle& at, const PolicyParams& sft, Batch batch,
                  double epsilon, std::uint64_t seed) {
  return grad_check([&](const ParameterBundle& b) { return evaluate_objective(objective, b, sft, batch); }, at,
                    epsilon, seed);
}

}  // namespace plab
