#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gdvrl {

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A trajectory refers to a case that is not loaded, or was graded against
/// the wrong case.
class CaseMismatch : public std::runtime_error {
 public:
  explicit CaseMismatch(std::vector<std::string> keys)
      : std::runtime_error(describe(keys)), keys_(std::move(keys)) {}

  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  static std::string describe(const std::vector<std::string>& keys) {
    std::string msg = "unresolved case key(s):";
    for (const auto& k : keys) msg += " [" + k + "]";
    return msg;
  }

  std::vector<std::string> keys_;
};

class EmptyInput : public std::invalid_argument {
 public:
  EmptyInput() : std::invalid_argument("metric requires at least one episode") {}
};

}  // namespace gdvrl
