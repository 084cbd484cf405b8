#pragma once

#include <stdexcept>
#include <string>

namespace trajssl {

// Error taxonomy mirrors the CLI exit-code contract:
//   ConfigError -> 2, IoError -> 3, NumericError -> 4, VersionError -> 5.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct VersionError : std::runtime_error {
  explicit VersionError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace trajssl
