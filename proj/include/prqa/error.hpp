#pragma once

#include <stdexcept>
#include <string>

namespace prqa {

enum class ErrorKind {
  dimension,   // tensor shape mismatch
  parameter,   // argument outside its documented domain
  numeric,     // non-finite values
  usage,       // API called out of contract
  parse,       // malformed input file or row
  io,          // unreadable/unwritable file
  data,        // well-formed input violating a data invariant
  config,      // invalid run configuration
  internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace prqa
