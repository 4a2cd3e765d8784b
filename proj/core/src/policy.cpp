// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "json.hpp"
#include "plab/errors.hpp"
#include "plab/rng.hpp"

namespace plab {
namespace {

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

// logits = out_map * h + out_bias
void project(const PolicyParams& p, std::span<const double> h, std::vector<double>& logits) {
  const std::size_t v = p.vocab_size();
  logits.assign(p.out_bias.begin(), p.out_bias.end());
  for (std::size_t k = 0; k < v; ++k) {
    auto w = p.out_map.row(k);
    double acc = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) acc += w[j] * h[j];
    logits[k] += acc;
  }
}

double log_sum_exp(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double x : z) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Running sum of input rows; h = sum / count.
struct PrefixState {
  std::vector<double> sum;
  std::size_t count = 0;

  PrefixState(const Matrix& embed, const SoftPrompt& soft_prompt, TokenSpan context) : sum(embed.cols(), 0.0) {
    for (std::size_t r = 0; r < soft_prompt.rows(); ++r) add_scaled(sum, soft_prompt.row(r), 1.0);
    for (Token t : context) add_scaled(sum, embed.row(t), 1.0);
    count = soft_prompt.rows() + context.size();
  }

  void push(const Matrix& embed, Token t) {
    add_scaled(sum, embed.row(t), 1.0);
    ++count;
  }

  void hidden(std::vector<double>& h) const {
    h.assign(sum.size(), 0.0);
    if (count == 0) return;
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < sum.size(); ++j) h[j] = sum[j] * inv;
  }
};

void check_soft_prompt(const PolicyParams& params, const SoftPrompt& soft_prompt) {
  if (!soft_prompt.empty() && soft_prompt.cols() != params.width())
    throw DomainError("soft prompt width " + std::to_string(soft_prompt.cols()) + " != policy width " +
                      std::to_string(params.width()));
}

void softmax(std::span<const double> z, std::vector<double>& p) {
  const double lse = log_sum_exp(z);
  p.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) p[k] = std::exp(z[k] - lse);
}

}  // namespace

PolicyParams PolicyParams::zeros(std::size_t vocab_size, std::size_t d) {
  return {Matrix(vocab_size, d), Matrix(vocab_size, d), std::vector<double>(vocab_size, 0.0)};
}

PolicyParams PolicyParams::random(std::size_t vocab_size, std::size_t d, std::uint64_t seed, double scale) {
  PolicyParams p = zeros(vocab_size, d);
  Rng rng(seed);
  for (double& x : p.embed.flat()) x = rng.uniform(-scale, scale);
  for (double& x : p.out_map.flat()) x = rng.uniform(-scale, scale);
  return p;
}

void validate_policy(const PolicyParams& params) {
  if (params.vocab_size() == 0) throw ValidationError("vocab_size", "must be at least 1");
  if (params.out_map.rows() != params.vocab_size() || params.out_map.cols() != params.width())
    throw ValidationError("out_map", "shape must match embed");
  if (params.out_bias.size() != params.vocab_size()) throw ValidationError("out_bias", "length must be vocab_size");
  auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(params.embed.flat())) throw ValidationError("embed", "non-finite entry");
  if (!finite(params.out_map.flat())) throw ValidationError("out_map", "non-finite entry");
  if (!finite(params.out_bias)) throw ValidationError("out_bias", "non-finite entry");
}

std::vector<double> pooled_hidden(const Matrix& embed, const SoftPrompt& soft_prompt,
                                  std::initializer_list<TokenSpan> segments) {
  std::vector<double> h(embed.cols(), 0.0);
  std::size_t count = soft_prompt.rows();
  for (std::size_t r = 0; r < soft_prompt.rows(); ++r) add_scaled(h, soft_prompt.row(r), 1.0);
  for (TokenSpan seg : segments) {
    for (Token t : seg) add_scaled(h, embed.row(t), 1.0);
    count += seg.size();
  }
  if (count > 0)
    for (double& x : h) x /= static_cast<double>(count);
  return h;
}

void pooled_hidden_backprop(std::span<const double> grad_hidden, Matrix& embed_grad, Matrix* soft_prompt_grad,
                            std::size_t soft_rows, std::initializer_list<TokenSpan> segments) {
  std::size_t count = soft_rows;
  for (TokenSpan seg : segments) count += seg.size();
  if (count == 0) return;
  const double inv = 1.0 / static_cast<double>(count);
  if (soft_prompt_grad)
    for (std::size_t r = 0; r < soft_rows; ++r) add_scaled(soft_prompt_grad->row(r), grad_hidden, inv);
  for (TokenSpan seg : segments)
    for (Token t : seg) add_scaled(embed_grad.row(t), grad_hidden, inv);
}

std::vector<double> next_token_logits(const PolicyParams& params, const SoftPrompt& soft_prompt,
                                      TokenSpan context) {
  check_soft_prompt(params, soft_prompt);
  PrefixState state(params.embed, soft_prompt, context);
  std::vector<double> h, logits;
  state.hidden(h);
  project(params, h, logits);
  return logits;
}

double logprob_sequence(const PolicyParams& params, const SoftPrompt& soft_prompt, TokenSpan prompt,
                        TokenSpan response) {
  if (!is_well_formed_response(response))
    throw DomainError("logprob_sequence: response must end with EOS and contain no earlier EOS");
  check_soft_prompt(params, soft_prompt);
  PrefixState state(params.embed, soft_prompt, prompt);
  std::vector<double> h, logits;
  double total = 0.0;
  for (Token y : response) {
    state.hidden(h);
    project(params, h, logits);
    total += logits[y] - log_sum_exp(logits);
    state.push(params.embed, y);
  }
  return total;
}

double logprob_sequence(const PolicyParams& params, const SoftPrompt& soft_prompt, TokenSpan prompt,
                        TokenSpan response, double scale, PolicyParams& grad, Matrix* soft_prompt_grad) {
  if (!is_well_formed_response(response))
    throw DomainError("logprob_sequence: response must end with EOS and contain no earlier EOS");
  check_soft_prompt(params, soft_prompt);
  const std::size_t d = params.width();
  const std::size_t v = params.vocab_size();
  const std::size_t steps = response.size();

  PrefixState state(params.embed, soft_prompt, prompt);
  std::vector<double> h, logits, probs, gz(v);
  // Row t holds dL/dh_t / count_t, the gradient each prefix row receives from step t.
  Matrix row_grad(steps, d);
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const Token y = response[t];
    state.hidden(h);
    project(params, h, logits);
    softmax(logits, probs);
    total += logits[y] - log_sum_exp(logits);

    for (std::size_t k = 0; k < v; ++k) gz[k] = scale * ((k == y ? 1.0 : 0.0) - probs[k]);
    for (std::size_t k = 0; k < v; ++k) {
      add_scaled(grad.out_map.row(k), h, gz[k]);
      grad.out_bias[k] += gz[k];
    }
    if (state.count > 0) {
      auto q = row_grad.row(t);
      const double inv = 1.0 / static_cast<double>(state.count);
      for (std::size_t k = 0; k < v; ++k) add_scaled(q, params.out_map.row(k), gz[k] * inv);
    }
    state.push(params.embed, y);
  }

  // Soft-prompt and prompt rows feed every step; response token j feeds steps j+1.. only.
  std::vector<double> suffix(d, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    if (t + 1 < steps) add_scaled(grad.embed.row(response[t]), suffix, 1.0);
    add_scaled(suffix, row_grad.row(t), 1.0);
  }
  if (soft_prompt_grad)
    for (std::size_t r = 0; r < soft_prompt.rows(); ++r) add_scaled(soft_prompt_grad->row(r), suffix, 1.0);
  for (Token t : prompt) add_scaled(grad.embed.row(t), suffix, 1.0);
  return total;
}

TokenSeq sample_response(const PolicyParams& params, const SoftPrompt& soft_prompt, TokenSpan prompt,
                         std::size_t max_len, std::uint64_t seed) {
  if (max_len == 0) throw DomainError("sample_response: max_len must be at least 1");
  check_soft_prompt(params, soft_prompt);
  Rng rng(seed);
  PrefixState state(params.embed, soft_prompt, prompt);
  std::vector<double> h, logits, probs;
  TokenSeq out;
  while (true) {
    if (out.size() + 1 == max_len) {
      out.push_back(kEos);
      break;
    }
    state.hidden(h);
    project(params, h, logits);
    softmax(logits, probs);
    const Token y = static_cast<Token>(rng.categorical(probs));
    out.push_back(y);
    if (y == kEos) break;
    state.push(params.embed, y);
  }
  return out;
}

double kl_to_reference(const PolicyParams& params, const PolicyParams& ref_params, const SoftPrompt& soft_prompt,
                       TokenSpan prompt, std::size_t horizon) {
  if (params.vocab_size() != ref_params.vocab_size())
    throw DomainError("kl_to_reference: vocabulary sizes differ");
  check_soft_prompt(params, soft_prompt);
  const SoftPrompt none;
  PrefixState state(params.embed, soft_prompt, prompt);
  PrefixState ref_state(ref_params.embed, none, prompt);
  std::vector<double> h, logits, ref_logits;
  double kl = 0.0;
  for (std::size_t step = 0; step < horizon; ++step) {
    state.hidden(h);
    project(params, h, logits);
    ref_state.hidden(h);
    project(ref_params, h, ref_logits);
    const double lse = log_sum_exp(logits);
    const double ref_lse = log_sum_exp(ref_logits);
    double step_kl = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      const double lp = logits[k] - lse;
      step_kl += std::exp(lp) * (lp - (ref_logits[k] - ref_lse));
    }
    kl += std::max(step_kl, 0.0);
    const auto greedy = static_cast<Token>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (greedy == kEos) break;
    state.push(params.embed, greedy);
    ref_state.push(ref_params.embed, greedy);
  }
  return kl;
}

void save_policy(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write policy checkpoint " + path.string());
  nlohmann::ordered_json header;
  header["vocab_size"] = params.vocab_size();
  header["d"] = params.width();
  out << header.dump() << '\n';
  write_rows(out, params.embed);
  write_rows(out, params.out_map);
  Matrix bias(1, params.out_bias.size());
  std::copy(params.out_bias.begin(), params.out_bias.end(), bias.flat().begin());
  write_rows(out, bias);
  if (!out) throw IoError("write failed for " + path.string());
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open policy checkpoint " + path.string());
  std::string text;
  std::size_t line = 1;
  if (!std::getline(in, text)) throw ParseError(line, "missing checkpoint header");
  std::size_t vocab = 0, d = 0;
  try {
    auto header = nlohmann::json::parse(text);
    vocab = header.at("vocab_size").get<std::size_t>();
    d = header.at("d").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line, e.what());
  }
  PolicyParams p = PolicyParams::zeros(vocab, d);
  read_rows(in, p.embed, line);
  read_rows(in, p.out_map, line);
  Matrix bias(1, vocab);
  read_rows(in, bias, line);
  std::copy(bias.flat().begin(), bias.flat().end(), p.out_bias.begin());
  validate_policy(p);
  return p;
}

}  // namespace plab
