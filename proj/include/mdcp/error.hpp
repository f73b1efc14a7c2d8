#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdcp {

enum class Errc {
  BadFractions,
  EmptySource,
  InvalidData,
  DegenerateLabels,
  NonFinite,
  TooFewSamples,
  ClassOutOfRange,
  UnknownSource,
  BadUniform,
  EmptyVector,
  BadLevel,
  NegativeLambda,
  NumericalFailure,
  EmptyLabels,
  BadConfig,
  Io,
};

std::string_view errcName(Errc code) noexcept;

/// Exception carrying a machine-checkable error code alongside the message.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errcName(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

inline std::string_view errcName(Errc code) noexcept {
  switch (code) {
    case Errc::BadFractions: return "BadFractions";
    case Errc::EmptySource: return "EmptySource";
    case Errc::InvalidData: return "InvalidData";
    case Errc::DegenerateLabels: return "DegenerateLabels";
    case Errc::NonFinite: return "NonFinite";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::ClassOutOfRange: return "ClassOutOfRange";
    case Errc::UnknownSource: return "UnknownSource";
    case Errc::BadUniform: return "BadUniform";
    case Errc::EmptyVector: return "EmptyVector";
    case Errc::BadLevel: return "BadLevel";
    case Errc::NegativeLambda: return "NegativeLambda";
    case Errc::NumericalFailure: return "NumericalFailure";
    case Errc::EmptyLabels: return "EmptyLabels";
    case Errc::BadConfig: return "BadConfig";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

} // namespace mdcp
