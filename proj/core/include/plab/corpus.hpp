// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

// Personalized preference data: comparisons (x, y1 chosen, y2 rejected, u)
// and the line-delimited on-disk format.
//
// File layout, one JSON object per line:
//   {"vocab_size": V, "num_users": m}
//   {"uid": 1, "ut": [..], "x": [..], "y1": [..], "y2": [..]}
//   ...

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace plab {

using Token = std::uint32_t;
using TokenSeq = std::vector<Token>;
using TokenSpan = std::span<const Token>;

/// Token 0 terminates every response in every vocabulary.
inline constexpr Token kEos = 0;

/// Measured response length: tokens before the terminal EOS.
inline std::size_t response_length(TokenSpan response) {
  return response.empty() ? 0 : response.size() - 1;
}

/// Well-formed response: nonempty, ends with EOS, no earlier EOS.
bool is_well_formed_response(TokenSpan response);

struct UserInfo {
  /// u^p in {0..m}; 0 is the unknown / generic user.
  std::uint32_t user_id = 0;
  /// u^t, possibly empty.
  TokenSeq text_tokens;

  friend bool operator==(const UserInfo&, const UserInfo&) = default;
};

struct PreferenceSample {
  TokenSeq prompt;
  TokenSeq chosen;
  TokenSeq rejected;
  UserInfo user;

  friend bool operator==(const PreferenceSample&, const PreferenceSample&) = default;
};

struct PreferenceDataset {
  std::vector<PreferenceSample> samples;
  std::size_t vocab_size = 0;
  std::size_t num_users = 0;

  friend bool operator==(const PreferenceDataset&, const PreferenceDataset&) = default;
};

/// Throws ValidationError naming the field of the first violated invariant.
void validate_sample(const PreferenceSample& s, std::size_t vocab_size, std::size_t num_users);
void validate_dataset(const PreferenceDataset& d);

/// Throws IoError, ParseError (with line number) or ValidationError.
PreferenceDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const PreferenceDataset& dataset, const std::filesystem::path& path);

}  // namespace plab
