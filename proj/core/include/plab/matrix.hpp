// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace plab {

/// Dense row-major float-64 matrix. Zero rows is a valid (empty) shape.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  /// Contiguous block of `count` rows starting at `first`.
  std::span<double> rows_span(std::size_t first, std::size_t count) {
    return {data_.data() + first * cols_, count * cols_};
  }
  std::span<const double> rows_span(std::size_t first, std::size_t count) const {
    return {data_.data() + first * cols_, count * cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  void fill(double value);
  /// Appends the rows of `other`; column counts must agree unless this is empty.
  void append_rows(const Matrix& other);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Writes each row on its own line with shortest round-trip decimal text.
void write_rows(std::ostream& out, const Matrix& m);
/// Reads `m.rows()` lines of `m.cols()` numbers into an already-shaped matrix.
/// `line` is advanced per row and used in ParseError messages.
void read_rows(std::istream& in, Matrix& m, std::size_t& line);

}  // namespace plab
