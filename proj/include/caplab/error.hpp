#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace caplab {

enum class ErrorKind {
  kInvalidInput,
  kInvalidConfig,
  kIngestion,
  kNumeric,
  kModelConstruction,
  kInternal,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Every failure raised by the library carries a category so the CLI can
// report it in a single machine-parsable line.
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

}  // namespace caplab
