#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dense_eval {

// Bad input data: malformed files, unknown ids, violated preconditions on
// user-supplied content. Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A text-format parse failure, tagged with the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Id not present in a store or mapping. The message always names the id.
class LookupError : public DataError {
 public:
  explicit LookupError(const std::string& id)
      : DataError("unknown id '" + id + "'"), id_(id) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Caller passed arguments that cannot be valid regardless of data
// (zero k, n > k, ...). Maps to CLI exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dense_eval
