#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace eqm {

// All library failures throw Error with a module-qualified code such as
// "trace.InvariantViolation" or "model.VersionMismatch". The CLI surfaces the
// code as a machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void raise(std::string code, const std::string& message) {
  throw Error(std::move(code), message);
}

}  // namespace eqm
