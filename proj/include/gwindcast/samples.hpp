#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gwindcast/core_types.hpp"

namespace gwc {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

std::string_view to_string(Split s) noexcept;

/// Per-feature mean and standard deviation (std floored to 1 when zero).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  bool operator==(const NormStats&) const = default;
};

struct SplitConfig {
  std::array<double, 3> ratios{0.70, 0.15, 0.15};  // train, val, test
  std::uint64_t seed = 0;
};

/// Aligned (ZTD window, future wind frame) pairs in chronological order.
/// Inputs and targets are stored unnormalized; train-split statistics ride along.
struct SampleSet {
  std::size_t window_steps = 0;
  std::size_t lead_steps = 0;
  std::int64_t step = 300;

  StationTable input_stations;
  StationTable target_stations;
  LevelSpec levels;

  std::vector<std::int64_t> target_times;  // one per sample
  std::vector<double> inputs;               // sample x window x input station
  std::vector<double> targets;              // sample x output_dim
  std::vector<Split> split_labels;

  std::optional<NormStats> input_stats;   // per input station
  std::optional<NormStats> target_stats;  // per output channel

  std::size_t size() const noexcept { return target_times.size(); }
  std::size_t n_features() const noexcept { return input_stations.size(); }
  std::size_t output_dim() const noexcept {
    return levels.size() * target_stations.size() * kComponents;
  }
  std::size_t input_stride() const noexcept { return window_steps * n_features(); }
  bool normalized() const noexcept { return input_stats.has_value() && target_stats.has_value(); }

  std::vector<std::size_t> indices(Split s) const;
  std::int64_t input_end_time(std::size_t i) const {
    return target_times[i] - static_cast<std::int64_t>(lead_steps) * step;
  }
};

}  // namespace gwc
