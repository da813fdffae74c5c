#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oumix {

/// Invalid configuration; the CLI maps this to exit code 2.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite state during time stepping.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(const std::string &what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

private:
  std::size_t step_;
};

} // namespace oumix
