#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace moestress {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration (arch files, cost models, endpoint
// configs). The message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  explicit ParseError(const std::string& msg) : Error(msg), line_(0) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace moestress
