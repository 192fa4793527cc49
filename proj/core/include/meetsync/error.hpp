#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace meetsync {

enum class ErrorKind {
  invalid_time,
  degenerate_model,
  degenerate_geometry,
  configuration,
  unaligned_stream,
  structural,
  parse,
  not_a_session,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the toolkit carries a kind so callers (and the CLI
/// exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace meetsync
