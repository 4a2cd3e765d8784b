// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// A tiny autoregressive softmax policy. The hidden state at each step is the
// mean of the input rows seen so far: optional soft-prompt rows followed by
// the token embeddings of prompt and generated prefix. There is no
// positional signal, so soft-prompt rows act purely through the mean.
//
//   h_t    = mean([soft_prompt; embed[x]; embed[y_<t]])   (zero if no rows)
//   logits = out_map * h_t + out_bias

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <span>
#include <vector>

#include "plab/corpus.hpp"
#include "plab/matrix.hpp"

namespace plab {

struct PolicyParams {
  Matrix embed;    // vocab_size x d
  Matrix out_map;  // vocab_size x d
  std::vector<double> out_bias;

  std::size_t vocab_size() const noexcept { return embed.rows(); }
  std::size_t width() const noexcept { return embed.cols(); }

  static PolicyParams zeros(std::size_t vocab_size, std::size_t d);
  /// Entries drawn from U(-scale, scale); biases start at zero.
  static PolicyParams random(std::size_t vocab_size, std::size_t d, std::uint64_t seed, double scale = 0.1);

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Shape and finiteness checks; throws ValidationError.
void validate_policy(const PolicyParams& params);

/// Soft-prompt rows (T x d) prepended to the token embeddings; T may be 0.
using SoftPrompt = Matrix;

/// Mean of the soft-prompt rows and the embedding rows of every token in
/// `segments`, in order. Zero vector when there are no rows.
std::vector<double> pooled_hidden(const Matrix& embed, const SoftPrompt& soft_prompt,
                                  std::initializer_list<TokenSpan> segments);

/// Distributes dL/dh of pooled_hidden back onto its input rows.
void pooled_hidden_backprop(std::span<const double> grad_hidden, Matrix& embed_grad, Matrix* soft_prompt_grad,
                            std::size_t soft_rows, std::initializer_list<TokenSpan> segments);

std::vector<double> next_token_logits(const PolicyParams& params, const SoftPrompt& soft_prompt,
                                      TokenSpan context);

/// log pi(response | soft_prompt, prompt), exact. DomainError when the
/// response is not EOS-terminated or has an interior EOS.
double logprob_sequence(const PolicyParams& params, const SoftPrompt& soft_prompt, TokenSpan prompt,
                        TokenSpan response);

/// Same value; also accumulates scale * d(logprob)/d(params) into `grad`
/// and, when given, scale * d(logprob)/d(soft_prompt) into `soft_prompt_grad`.
double logprob_sequence(const PolicyParams& params, const SoftPrompt& soft_prompt, TokenSpan prompt,
                        TokenSpan response, double scale, PolicyParams& grad, Matrix* soft_prompt_grad);

/// Ancestral sampling. After max_len - 1 non-EOS tokens the next token is
/// forced to EOS. Deterministic in `seed`.
TokenSeq sample_response(const PolicyParams& params, const SoftPrompt& soft_prompt, TokenSpan prompt,
                         std::size_t max_len, std::uint64_t seed);

/// Sum of next-token KL(pi || pi_ref) along the greedy trajectory of pi,
/// up to `horizon` steps or the first EOS. The soft prompt conditions pi
/// only; the reference is evaluated unconditioned.
double kl_to_reference(const PolicyParams& params, const PolicyParams& ref_params, const SoftPrompt& soft_prompt,
                       TokenSpan prompt, std::size_t horizon);

void save_policy(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_policy(const std::filesystem::path& path);

}  // namespace plab
