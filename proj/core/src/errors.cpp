// Copyright 2026 The plab Authors
// SPDX-License-Identifier: Apache-2.0

#include "plab/errors.hpp"

#include <utility>

namespace plab {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

ValidationError::ValidationError(std::string field, const std::string& what)
    : std::runtime_error("invalid '" + field + "': " + what), field_(std::move(field)) {}

NumericError::NumericError(std::size_t step, const std::string& what)
    : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}

}  // namespace plab
