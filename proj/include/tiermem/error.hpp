#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tiermem {

enum class ErrorKind {
  validation,
  not_found,
  schema,
  io,
  parse,
  transport,
  empty_response,
  config,
  data,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the engine; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tiermem
