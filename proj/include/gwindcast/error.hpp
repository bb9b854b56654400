#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gwc {

/// Failure kinds raised across the library. Each maps onto one of the
/// CLI's exit-code classes via `exit_class`.
enum class Errc {
  InvalidConfig,
  Io,
  ParseError,
  AllMissing,
  EmptyOverlap,
  NegativeSpeed,
  KTooLarge,
  Misaligned,
  NoSamples,
  ShapeMismatch,
  OddWidth,
  BatchTooSmall,
  GraphNotRecorded,
  UnnormalizedInput,
  SplitEmpty,
  EmptySplit,
  NonFiniteGradient,
  NonFiniteLoss,
  EmptyTrain,
  ChannelMismatch,
  EmptyInput,
  AllCellsDegenerate,
  NoTemporalOverlap,
  ConfigMismatch,
};

enum class ExitClass { Config = 2, Data = 3, Numeric = 4 };

std::string_view to_string(Errc code) noexcept;
ExitClass exit_class(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gwc
