#pragma once

/// \file errors.hpp
/// Error categories surfaced to the CLI exit-code mapping: configuration
/// problems are std::invalid_argument, data/file problems are DataError,
/// numerical breakdowns (non-finite iterates, failed decompositions) are
/// NumericError.

#include <stdexcept>
#include <string>

namespace rsfactor {

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rsfactor
