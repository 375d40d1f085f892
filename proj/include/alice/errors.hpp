#ifndef ALICE_ERRORS_HPP
#define ALICE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace alice {

/// Invalid model, optimizer or experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mismatched vector, matrix or batch dimensions.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared where finite values are required. `where()`
/// names the location (a layer index or an evaluation point).
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::string where)
      : std::runtime_error(what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace alice

#endif
