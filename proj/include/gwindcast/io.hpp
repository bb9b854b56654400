#pragma once

// Text and binary file formats.
//
// Binary panel/cube layout (all integers and floats little-endian):
//   magic      4 bytes   "GWCZ" (ZTD panel) or "GWCW" (wind cube)
//   version    u32       1
//   axis       i64 start, i64 step, u64 count
//   stations   u64 n, then per station: u32 id_len, id bytes, f64 lat, f64 lon
//   [cube]     u8 level_kind, u64 n_levels, f64 levels[n_levels], u64 components
//   values     f64[...] row-major (time-major)
//   mask       u8[...] same element count, 1 = observed

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gwindcast/core_types.hpp"

namespace gwc::io {

using Bytes = std::vector<std::uint8_t>;

/// "YYYY-MM-DDTHH:MM:SSZ" <-> epoch seconds (UTC).
std::string format_iso8601(std::int64_t epoch_seconds);
std::int64_t parse_iso8601(std::string_view text);

/// Fixed 9-significant-digit rendering used by every emitted table.
std::string fmt9(double x);
/// Shortest round-trip-exact rendering (17 significant digits).
std::string fmt17(double x);

std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);
Bytes read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const Bytes& bytes);

/// 64-bit FNV-1a digest, rendered as 16 hex digits by `hex_digest`.
std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s);
std::string hex_digest(std::uint64_t h);

// Station file: header `station_id,lat,lon`.
StationTable parse_stations_csv(std::string_view text);
std::string stations_to_csv(const StationTable& table);
StationTable read_stations_csv(const std::filesystem::path& path);
void write_stations_csv(const std::filesystem::path& path, const StationTable& table);

// ZTD file: header `timestamp,station_id,ztd_m`; absent rows are missing values.
ZtdPanel parse_ztd_csv(std::string_view text, const StationTable& stations, std::int64_t step = 300);
std::string ztd_to_csv(const ZtdPanel& panel);

/// One line of the raw wind file.
struct WindRecord {
  std::int64_t time = 0;
  std::string station_id;
  double level = 0.0;
  double speed_ms = 0.0;
  double direction_deg = 0.0;
  double w_ms = 0.0;
};

/// Raw wind file: optional sidecar line `# level_kind=height_m|pressure_hPa`,
/// then header `timestamp,station_id,level,wind_speed_ms,wind_dir_deg,w_ms`.
struct WindObservations {
  LevelKind kind = LevelKind::HeightM;
  std::vector<WindRecord> records;
};

WindObservations parse_wind_csv(std::string_view text);
/// Builds a cube on the record levels (u, v from speed/direction) with a
/// uniform axis of `step` seconds spanning the records.
WindCube wind_cube_from_records(const WindObservations& obs, const StationTable& stations,
                                std::int64_t step);
/// Writes observed entries as speed/direction/w rows.
std::string wind_to_csv(const WindCube& cube);

Bytes encode_panel(const ZtdPanel& panel);
ZtdPanel decode_panel(const Bytes& bytes);
Bytes encode_cube(const WindCube& cube);
WindCube decode_cube(const Bytes& bytes);

void write_panel(const std::filesystem::path& path, const ZtdPanel& panel);
ZtdPanel read_panel(const std::filesystem::path& path);
void write_cube(const std::filesystem::path& path, const WindCube& cube);
WindCube read_cube(const std::filesystem::path& path);

}  // namespace gwc::io
