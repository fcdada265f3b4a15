#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace segvit {

// Caller broke a documented precondition (shape, range, config invariant).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class BoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Input data is well-formed but semantically invalid (label out of range, missing history).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed netpbm stream. Carries the byte offset where parsing failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Bad checkpoint container (magic, version, truncation).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace segvit
