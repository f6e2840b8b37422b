#pragma once

#include <stdexcept>
#include <string>

namespace fpr {

// Raised for user-facing configuration problems (bad config file, unknown
// hook point, out-of-range index, invalid parameter). The CLI maps this to
// exit code 2; everything else that escapes maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fpr
