#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ddlab {

/// Shapes of operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity reached a place where only finite values are allowed.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Cosine similarity requested for a zero-norm vector.
class UndefinedSimilarityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Large-activation ratio requested when every non-tracked activation is zero.
class UndefinedRatioError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input file; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Missing or unreadable file, or one whose layout is not what we expect.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddlab
