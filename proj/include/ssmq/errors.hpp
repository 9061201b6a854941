#pragma once
#include <stdexcept>
#include <string>

namespace ssmq {

// Bad user-facing configuration (CLI exit code 2).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure at runtime: NaN propagation, divergence, overflow (CLI exit code 3).
struct numerical_error : std::runtime_error {
  explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ssmq
