#pragma once

#include <stdexcept>
#include <string>

namespace recal {

// Input text that cannot be decoded (CSV/tensor files): carries a message
// and, where known, the offending line number.
class parse_error : public std::runtime_error {
public:
  explicit parse_error(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Structured document with a recognized container but wrong/missing content
// (calibration-map files, tensor headers).
class format_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Numeric argument outside the mathematical domain of an operation.
class domain_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Caller broke a stated precondition (missing labels, misaligned tables,
// invariant-violating constructor arguments).
class contract_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Filesystem failure wrapping the underlying reason.
class io_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace recal
