#pragma once

// Shared data model: station metadata, the uniform time axis, the ZTD panel
// (time x station) and the wind cube (time x level x station x component).
// Missing values are NaN plus an explicit mask (true = observed).

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gwc {

struct Station {
  std::string id;
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  bool operator==(const Station&) const = default;
};

struct StationTable {
  std::vector<Station> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  const Station& operator[](std::size_t i) const { return entries[i]; }
  std::optional<std::size_t> index_of(std::string_view id) const;

  bool operator==(const StationTable&) const = default;
};

/// Uniform time axis, t_k = start + k * step (epoch seconds).
struct TimeAxis {
  std::int64_t start = 0;
  std::int64_t step = 300;
  std::size_t count = 0;

  std::int64_t time_at(std::size_t k) const noexcept {
    return start + static_cast<std::int64_t>(k) * step;
  }
  /// Index of timestamp `t` if it falls exactly on the axis.
  std::optional<std::size_t> index_of(std::int64_t t) const noexcept;
  std::int64_t end() const noexcept { return count == 0 ? start : time_at(count - 1); }

  bool operator==(const TimeAxis&) const = default;
};

struct ZtdPanel {
  TimeAxis axis;
  StationTable stations;
  std::vector<double> values;       // axis.count x stations.size(), row-major
  std::vector<std::uint8_t> mask;   // 1 = observed

  static ZtdPanel empty_like(const TimeAxis& axis, const StationTable& stations);

  std::size_t n_time() const noexcept { return axis.count; }
  std::size_t n_stations() const noexcept { return stations.size(); }
  std::size_t index(std::size_t t, std::size_t s) const noexcept { return t * n_stations() + s; }
  double& at(std::size_t t, std::size_t s) { return values[index(t, s)]; }
  double at(std::size_t t, std::size_t s) const { return values[index(t, s)]; }
  bool observed(std::size_t t, std::size_t s) const { return mask[index(t, s)] != 0; }
};

enum class LevelKind : std::uint8_t { HeightM = 0, PressureHPa = 1 };

std::string_view to_string(LevelKind kind) noexcept;
std::optional<LevelKind> level_kind_from_string(std::string_view s) noexcept;

struct LevelSpec {
  LevelKind kind = LevelKind::PressureHPa;
  std::vector<double> values;  // ascending heights or descending pressures

  std::size_t size() const noexcept { return values.size(); }
  bool operator==(const LevelSpec&) const = default;
};

enum class Component : std::size_t { U = 0, V = 1, W = 2 };
inline constexpr std::size_t kComponents = 3;
inline constexpr std::array<std::string_view, kComponents> kComponentNames{"u", "v", "w"};

struct WindCube {
  TimeAxis axis;
  LevelSpec levels;
  StationTable stations;
  std::size_t components = kComponents;
  std::vector<double> values;      // time x level x station x component
  std::vector<std::uint8_t> mask;

  static WindCube empty_like(const TimeAxis& axis, const LevelSpec& levels,
                             const StationTable& stations);

  std::size_t n_time() const noexcept { return axis.count; }
  std::size_t n_levels() const noexcept { return levels.size(); }
  std::size_t n_stations() const noexcept { return stations.size(); }
  std::size_t index(std::size_t t, std::size_t l, std::size_t s, std::size_t c) const noexcept {
    return ((t * n_levels() + l) * n_stations() + s) * components + c;
  }
  double& at(std::size_t t, std::size_t l, std::size_t s, std::size_t c) {
    return values[index(t, l, s, c)];
  }
  double at(std::size_t t, std::size_t l, std::size_t s, std::size_t c) const {
    return values[index(t, l, s, c)];
  }
  bool observed(std::size_t t, std::size_t l, std::size_t s, std::size_t c) const {
    return mask[index(t, l, s, c)] != 0;
  }
  /// Values per time step (levels x stations x components).
  std::size_t frame_size() const noexcept { return n_levels() * n_stations() * components; }
};

/// A broken invariant: which one, and where.
struct Violation {
  std::string invariant;
  std::vector<std::size_t> index;
  std::string detail;
};

std::vector<Violation> validate(const StationTable& table);
std::vector<Violation> validate(const TimeAxis& axis);
std::vector<Violation> validate(const LevelSpec& levels);
std::vector<Violation> validate(const ZtdPanel& panel);
std::vector<Violation> validate(const WindCube& cube);

/// Throws Error(code) listing the first few violations when `v` is non-empty.
void throw_if_invalid(const std::vector<Violation>& v, std::string_view what);

}  // namespace gwc
