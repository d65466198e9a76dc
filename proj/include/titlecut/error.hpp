#pragma once

#include <stdexcept>
#include <string>

namespace titlecut {

// Shape or rank disagreement between tensors / matrices.
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Broken API precondition (non-scalar loss, mismatched attention widths, ...).
struct ContractError : std::logic_error {
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

// NaN/Inf where finite values are required.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Token id or character outside the vocabulary.
struct VocabError : std::runtime_error {
  explicit VocabError(const std::string& what) : std::runtime_error(what) {}
};

// Invalid training data (e.g. a short-title character missing from its source).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration; message lists every problem found.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace titlecut
