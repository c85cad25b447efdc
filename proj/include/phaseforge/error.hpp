#pragma once

#include <stdexcept>
#include <string>

namespace phaseforge {

enum class Errc {
  PhaseOutOfRange,
  OutOfRange,
  DimensionMismatch,
  FrequencyOrder,
  FrequencyMismatch,
  ShapeMismatch,
  OddDimensions,
  TargetOutOfRange,
  EmptyMask,
  Config,
  Io,
  DatasetMissingFrequency,
  MissingCheckpoint,
  MissingData,
};

const char* to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline const char* to_string(Errc code) {
  switch (code) {
    case Errc::PhaseOutOfRange: return "PhaseOutOfRange";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::FrequencyOrder: return "FrequencyOrder";
    case Errc::FrequencyMismatch: return "FrequencyMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::OddDimensions: return "OddDimensions";
    case Errc::TargetOutOfRange: return "TargetOutOfRange";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::Config: return "ConfigError";
    case Errc::Io: return "IoError";
    case Errc::DatasetMissingFrequency: return "DatasetMissingFrequency";
    case Errc::MissingCheckpoint: return "MissingCheckpoint";
    case Errc::MissingData: return "MissingData";
  }
  return "Error";
}

}  // namespace phaseforge
