#pragma once

// Deterministic coupled ZTD / wind data driven by a shared latent process.
//
//   z_k(t)       AR(1) (phi = 0.95, unit variance) + sinusoid (3 h or 24 h period)
//   ZTD(t, s)    2.4 m + 0.02 m * (W[s] . z(t) + noise_std * |W[s]| * e)
//   wind(t, c)   mean_c + gain_c * f(a_c . z(t - lag) + b_c) + noise_std * gain_c * e
//   f(x)         tanh(k x) / k for nonlinearity k > 0, identity for k = 0
//
// W is spatially localized around per-mode centres, so few nearby stations
// cannot resolve every mode. Future wind is a function of the current ZTD
// window by construction whenever lead <= lag.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gwindcast/core_types.hpp"
#include "gwindcast/metrics.hpp"
#include "gwindcast/samples.hpp"

namespace gwc {

struct SynthConfig {
  std::uint64_t seed = 20250522;
  std::size_t n_ztd_stations = 60;
  std::size_t n_wind_stations = 3;
  std::size_t n_levels = 3;
  std::size_t n_steps = 4000;
  std::size_t latent_dim = 8;
  double noise_std = 0.05;
  double missing_rate = 0.02;
  std::size_t lead_coupling_steps = 6;
  double nonlinearity = 0.35;
  std::int64_t start_time = 1747872000;  // 2025-05-22T00:00:00Z
  std::int64_t step = 300;
  double center_lat = 29.36;
  double center_lon = 120.07;
};

void validate(const SynthConfig& cfg);
nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

struct SynthData {
  StationTable ztd_stations;
  StationTable wind_stations;
  ZtdPanel ztd;
  WindCube wind;
  std::vector<double> latent;  // n_steps x latent_dim, aligned with the ZTD axis
  std::size_t latent_dim = 0;
};

SynthData generate(const SynthConfig& cfg);

struct LinearFitResult {
  MetricReport report;   // test split
  bool ridge_applied = false;
  WindCube prediction;   // test split
  WindCube truth;
};

/// Ordinary least squares from the standardized, flattened ZTD window (plus
/// intercept) to the raw targets, fit on train and scored on test. A
/// rank-deficient design is regularized with ridge 1e-8 and reported.
LinearFitResult oracle_linear_fit(const SampleSet& set, double lead_min);
LinearFitResult oracle_linear_fit(const ZtdPanel& ztd, const WindCube& wind, std::size_t window_steps,
                                  std::size_t lead_steps, const SplitConfig& split);

}  // namespace gwc
