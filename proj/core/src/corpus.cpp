// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/corpus.hpp"

#include <fstream>
#include <string>

#include "json.hpp"
#include "plab/errors.hpp"

namespace plab {
namespace {

using ordered_json = nlohmann::ordered_json;

void check_tokens(const TokenSeq& seq, std::size_t vocab_size, const char* field) {
  for (Token t : seq)
    if (t >= vocab_size)
      throw ValidationError(field, "token " + std::to_string(t) + " outside vocabulary of size " +
                                       std::to_string(vocab_size));
}

void check_response(const TokenSeq& seq, const char* field) {
  if (seq.empty() || seq.back() != kEos) throw ValidationError(field, "must end with EOS (token 0)");
  for (std::size_t i = 0; i + 1 < seq.size(); ++i)
    if (seq[i] == kEos) throw ValidationError(field, "EOS before the final position");
}

TokenSeq read_tokens(const nlohmann::json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_array())
    throw ParseError(line, std::string("missing token array '") + key + "'");
  TokenSeq out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw ParseError(line, std::string("non-integer or negative token in '") + key + "'");
    out.push_back(static_cast<Token>(v.get<std::int64_t>()));
  }
  return out;
}

std::size_t read_count(const nlohmann::json& record, const char* key, std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_number_integer() || it->get<std::int64_t>() < 0)
    throw ParseError(line, std::string("missing nonnegative integer '") + key + "'");
  return static_cast<std::size_t>(it->get<std::int64_t>());
}

}  // namespace

bool is_well_formed_response(TokenSpan response) {
  if (response.empty() || response.back() != kEos) return false;
  for (std::size_t i = 0; i + 1 < response.size(); ++i)
    if (response[i] == kEos) return false;
  return true;
}

void validate_sample(const PreferenceSample& s, std::size_t vocab_size, std::size_t num_users) {
  if (s.user.user_id > num_users)
    throw ValidationError("uid", "user id " + std::to_string(s.user.user_id) + " exceeds num_users " +
                                     std::to_string(num_users));
  check_tokens(s.user.text_tokens, vocab_size, "ut");
  check_tokens(s.prompt, vocab_size, "x");
  check_tokens(s.chosen, vocab_size, "y1");
  check_tokens(s.rejected, vocab_size, "y2");
  for (Token t : s.prompt)
    if (t == kEos) throw ValidationError("x", "prompt contains EOS");
  check_response(s.chosen, "y1");
  check_response(s.rejected, "y2");
  if (s.chosen == s.rejected) throw ValidationError("y2", "chosen and rejected responses are identical");
}

void validate_dataset(const PreferenceDataset& d) {
  if (d.vocab_size == 0) throw ValidationError("vocab_size", "must be at least 1");
  for (const auto& s : d.samples) validate_sample(s, d.vocab_size, d.num_users);
}

PreferenceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());

  PreferenceDataset d;
  std::string text;
  std::size_t line = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty() || text == "\r") continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, e.what());
    }
    if (!record.is_object()) throw ParseError(line, "expected a JSON object");
    if (!have_header) {
      d.vocab_size = read_count(record, "vocab_size", line);
      d.num_users = read_count(record, "num_users", line);
      if (d.vocab_size == 0) throw ValidationError("vocab_size", "must be at least 1");
      have_header = true;
      continue;
    }
    PreferenceSample s;
    s.user.user_id = static_cast<std::uint32_t>(read_count(record, "uid", line));
    s.user.text_tokens = read_tokens(record, "ut", line);
    s.prompt = read_tokens(record, "x", line);
    s.chosen = read_tokens(record, "y1", line);
    s.rejected = read_tokens(record, "y2", line);
    try {
      validate_sample(s, d.vocab_size, d.num_users);
    } catch (const ValidationError& e) {
      throw ValidationError(e.field(), "line " + std::to_string(line) + ": " + e.what());
    }
    d.samples.push_back(std::move(s));
  }
  if (!have_header) throw ParseError(line + 1, "missing header record");
  return d;
}

void save_dataset(const PreferenceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset " + path.string());
  ordered_json header;
  header["vocab_size"] = dataset.vocab_size;
  header["num_users"] = dataset.num_users;
  out << header.dump() << '\n';
  for (const auto& s : dataset.samples) {
    ordered_json rec;
    rec["uid"] = s.user.user_id;
    rec["ut"] = s.user.text_tokens;
    rec["x"] = s.prompt;
    rec["y1"] = s.chosen;
    rec["y2"] = s.rejected;
    out << rec.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace plab
