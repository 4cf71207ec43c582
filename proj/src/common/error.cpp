#include "dmrac/error.hpp"

namespace dmrac {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NotHurwitz: return "NotHurwitz";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::NonFiniteState: return "NonFiniteState";
    case Errc::NonFiniteOutput: return "NonFiniteOutput";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::InsufficientData: return "InsufficientData";
    case Errc::NotControllable: return "NotControllable";
    case Errc::StaleVersion: return "StaleVersion";
    case Errc::ConfigError: return "ConfigError";
    case Errc::Io: return "Io";
    case Errc::BadCrc: return "BadCrc";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BadFormat: return "BadFormat";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace dmrac
