#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tinyring {

enum class ErrorKind {
  invalid_argument,
  out_of_memory,
  translation_fault,
  invalid_register,
  register_write_fault,
  not_ready,
  protocol_violation,
  format_error,
  io_error,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::out_of_memory: return "out-of-memory";
    case ErrorKind::translation_fault: return "translation-fault";
    case ErrorKind::invalid_register: return "invalid-register";
    case ErrorKind::register_write_fault: return "register-write-fault";
    case ErrorKind::not_ready: return "not-ready";
    case ErrorKind::protocol_violation: return "protocol-violation";
    case ErrorKind::format_error: return "format-error";
    case ErrorKind::io_error: return "io-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tinyring
