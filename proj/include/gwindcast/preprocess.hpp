#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gwindcast/core_types.hpp"
#include "gwindcast/samples.hpp"

namespace gwc {

inline constexpr double kEarthRadiusKm = 6371.0;

struct PressureMapParams {
  double p0_hpa = 1013.25;
  double scale_height_m = 8000.0;
};

/// Per-station bookkeeping produced while filling gaps.
struct GapFillReport {
  std::vector<std::size_t> filled_per_station;
  std::vector<std::size_t> spatially_filled_stations;  // stations with no observations
};

/// Interior gaps: linear in time. Edge gaps: nearest observed value. Stations
/// without any observation: inverse-distance weighting of the 4 nearest
/// observed stations at each time. Observed entries are never modified.
ZtdPanel fill_gaps(const ZtdPanel& panel, GapFillReport* report = nullptr);

/// Linear resampling along time onto the epoch-aligned grid of `target_step`
/// inside the source span. Masked where either neighbour is unobserved.
WindCube resample_time(const WindCube& cube, std::int64_t target_step);

/// p0 * exp(-h / H). Strictly decreasing in h.
double height_to_pressure(double height_m, const PressureMapParams& params = {});

/// Heights -> pressure via `height_to_pressure`, then linear-in-ln(p)
/// interpolation onto `targets`; targets outside the range take the nearest level.
WindCube interpolate_to_pressure_levels(const WindCube& cube, const LevelSpec& targets,
                                        const PressureMapParams& params = {});

struct WindUV {
  double u = 0.0;
  double v = 0.0;
};
struct WindSpeedDir {
  double speed = 0.0;
  double direction_deg = 0.0;  // blowing from, clockwise from north, [0, 360)
};

WindUV decompose_wind(double speed, double direction_deg);
WindSpeedDir compose_wind(double u, double v);

double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// The k closest stations by great-circle distance, nearest first; ties broken
/// by ascending station id.
StationTable select_nearest_stations(const StationTable& table, double ref_lat, double ref_lon,
                                     std::size_t k);

/// `subset` reordered to follow `table`'s row order.
StationTable restore_table_order(const StationTable& table, const StationTable& subset);

ZtdPanel select_panel_stations(const ZtdPanel& panel, const StationTable& stations);
WindCube select_cube_stations(const WindCube& cube, const StationTable& stations);

SampleSet build_samples(const ZtdPanel& ztd, const WindCube& wind, std::size_t window_steps,
                        std::size_t lead_steps, const SplitConfig& split);

}  // namespace gwc
