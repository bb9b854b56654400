#include "gwindcast/error.hpp"

namespace gwc {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Io: return "Io";
    case Errc::ParseError: return "ParseError";
    case Errc::AllMissing: return "AllMissing";
    case Errc::EmptyOverlap: return "EmptyOverlap";
    case Errc::NegativeSpeed: return "NegativeSpeed";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::Misaligned: return "Misaligned";
    case Errc::NoSamples: return "NoSamples";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::OddWidth: return "OddWidth";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::GraphNotRecorded: return "GraphNotRecorded";
    case Errc::UnnormalizedInput: return "UnnormalizedInput";
    case Errc::SplitEmpty: return "SplitEmpty";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyTrain: return "EmptyTrain";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::AllCellsDegenerate: return "AllCellsDegenerate";
    case Errc::NoTemporalOverlap: return "NoTemporalOverlap";
    case Errc::ConfigMismatch: return "ConfigMismatch";
  }
  return "Unknown";
}

ExitClass exit_class(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidConfig:
    case Errc::KTooLarge:
    case Errc::ConfigMismatch:
    case Errc::OddWidth:
      return ExitClass::Config;
    case Errc::NonFiniteGradient:
    case Errc::NonFiniteLoss:
    case Errc::GraphNotRecorded:
    case Errc::ShapeMismatch:
    case Errc::BatchTooSmall:
      return ExitClass::Numeric;
    default:
      return ExitClass::Data;
  }
}

}  // namespace gwc
