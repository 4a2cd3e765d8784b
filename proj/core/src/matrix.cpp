// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/matrix.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <string>

#include "plab/errors.hpp"

namespace plab {

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Matrix::append_rows(const Matrix& other) {
  if (other.rows_ == 0) return;
  if (rows_ == 0) {
    *this = other;
    return;
  }
  if (other.cols_ != cols_) throw DomainError("append_rows: column count mismatch");
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

void write_rows(std::ostream& out, const Matrix& m) {
  std::array<char, 32> buf{};
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), row[c]);
      if (c) out.put(' ');
      out.write(buf.data(), end - buf.data());
    }
    out.put('\n');
  }
}

void read_rows(std::istream& in, Matrix& m, std::size_t& line) {
  std::string text;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    ++line;
    if (!std::getline(in, text)) throw ParseError(line, "unexpected end of tensor data");
    const char* p = text.data();
    const char* end = text.data() + text.size();
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      while (p < end && *p == ' ') ++p;
      auto [next, ec] = std::from_chars(p, end, row[c]);
      if (ec != std::errc()) throw ParseError(line, "expected " + std::to_string(row.size()) + " numbers");
      p = next;
    }
    while (p < end && (*p == ' ' || *p == '\r')) ++p;
    if (p != end) throw ParseError(line, "trailing characters after row");
  }
}

}  // namespace plab
