#pragma once

#include <stdexcept>
#include <string>

namespace poselift {

enum class ErrorKind { contract, config, data, numeric };

// Every failure raised by the library carries a kind so the CLI can map it
// onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ContractViolation : Error {
  explicit ContractViolation(const std::string& what) : Error(ErrorKind::contract, what) {}
};
// A NaN or infinity where a finite value is required.
struct NonFiniteValue : ContractViolation {
  using ContractViolation::ContractViolation;
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace poselift
