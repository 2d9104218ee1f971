#pragma once

#include <stdexcept>
#include <string>

namespace ibp {

// Bad configuration / parameters: maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite state during integration or accumulation: maps to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& msg, long step) : std::runtime_error(msg), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace ibp
