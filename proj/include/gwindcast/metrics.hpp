#pragma once

// Verification metrics over paired (prediction, truth) series.
//
// RMSE and MAE pool every finite (time, cell) pair. RMSPE and R are temporal
// statistics per cell (station x level x component) averaged over cells;
// cells with a degenerate truth range or constant series are excluded and
// counted rather than zeroed.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwindcast/core_types.hpp"

namespace gwc {

/// cells x time, cell-major; NaN marks a missing entry.
struct SeriesSet {
  std::size_t n_cells = 0;
  std::size_t n_time = 0;
  std::vector<double> values;

  SeriesSet() = default;
  SeriesSet(std::size_t cells, std::size_t time);
  /// One cell holding `series`.
  static SeriesSet single(std::span<const double> series);

  double& at(std::size_t cell, std::size_t t) { return values[cell * n_time + t]; }
  double at(std::size_t cell, std::size_t t) const { return values[cell * n_time + t]; }
};

double rmse(const SeriesSet& pred, const SeriesSet& truth);
double mae(const SeriesSet& pred, const SeriesSet& truth);

struct CellMean {
  double value = 0.0;
  std::size_t used_cells = 0;
  std::size_t excluded_cells = 0;
};

CellMean rmspe(const SeriesSet& pred, const SeriesSet& truth);
CellMean pearson_r(const SeriesSet& pred, const SeriesSet& truth);

struct MetricValues {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> rmspe;
  std::optional<double> r;
  std::size_t n_pairs = 0;
  std::size_t n_cells = 0;
  std::size_t rmspe_excluded = 0;
  std::size_t r_excluded = 0;
};

/// All four metrics; a metric whose every cell is degenerate is left empty.
MetricValues evaluate(const SeriesSet& pred, const SeriesSet& truth);

/// Series of the given stations (all when empty) at one level/component;
/// unobserved entries become NaN.
SeriesSet extract_series(const WindCube& cube, std::size_t level, std::size_t component,
                         std::span<const std::size_t> stations = {});

struct MetricCell {
  double lead_min = 0.0;
  double level = 0.0;
  std::size_t component = 0;
  MetricValues values;
};

struct PooledMetric {
  double lead_min = 0.0;
  std::size_t component = 0;
  MetricValues values;  // over every level and station
};

struct MetricReport {
  LevelKind level_kind = LevelKind::PressureHPa;
  std::vector<MetricCell> cells;
  std::vector<PooledMetric> pooled;

  void append(const MetricReport& other);
};

/// Per (level, component) metrics over the stations, plus per-component pools.
/// `stations` restricts scoring to a subset (all when empty).
MetricReport evaluate_cubes(const WindCube& pred, const WindCube& truth, double lead_min,
                            std::span<const std::size_t> stations = {});

nlohmann::json to_json(const MetricValues& v);
nlohmann::json to_json(const MetricReport& r);

inline constexpr std::array<std::string_view, 4> kMetricNames{"rmse", "mae", "rmspe", "r"};

/// Value of metric `name` (NaN when excluded).
double metric_value(const MetricValues& v, std::string_view name);

struct MosaicTable {
  std::string metric;
  std::string component;
  std::string csv;  // rows: leads; columns: levels
};

/// One lead x level table per (metric, component), 9 significant digits.
std::vector<MosaicTable> mosaic(std::span<const MetricReport> reports);

}  // namespace gwc
