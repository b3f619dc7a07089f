#pragma once

#include <stdexcept>
#include <string>

namespace mdns {

// Categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Config = 2,
  Numeric = 3,
  CapExceeded = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] void throw_config(const std::string& what);
[[noreturn]] void throw_numeric(const std::string& what);
[[noreturn]] void throw_cap(const std::string& what);

}  // namespace mdns
