#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmrac {

enum class Errc {
  InvalidArgument,
  NotHurwitz,
  SingularSystem,
  NonFiniteState,
  NonFiniteOutput,
  NonFiniteGradient,
  InsufficientData,
  NotControllable,
  StaleVersion,
  ConfigError,
  Io,
  BadCrc,
  ShapeMismatch,
  BadFormat,
};

std::string_view to_string(Errc code);

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace dmrac
