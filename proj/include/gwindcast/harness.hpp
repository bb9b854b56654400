#pragma once

// Configuration-driven experiment runner: lead-time sweep, station-count
// ablation around a reference site, gridded-baseline comparison and
// plot-ready table emission. Every run is a pure function of the config.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwindcast/core_types.hpp"
#include "gwindcast/metrics.hpp"
#include "gwindcast/model.hpp"
#include "gwindcast/postprocess.hpp"
#include "gwindcast/preprocess.hpp"
#include "gwindcast/samples.hpp"
#include "gwindcast/synthgen.hpp"
#include "gwindcast/trainer.hpp"

namespace gwc {

inline constexpr std::string_view kVersion = "1.0.0";

enum class DataSourceKind { Synthetic, Files };

struct DataSource {
  DataSourceKind kind = DataSourceKind::Synthetic;
  SynthConfig synth;
  // File sources: `.bin` paths use the binary formats, anything else is CSV.
  std::string ztd;
  std::string ztd_stations;  // CSV panels only
  std::string wind;
  std::string wind_stations;  // CSV wind records only
  std::int64_t step_s = 300;
  std::vector<double> pressure_levels_hpa;  // targets for height-level wind
};

/// Generic time-window and station-subset filters (empty = no filter).
struct DataFilters {
  std::string time_start;  // ISO-8601, inclusive
  std::string time_end;    // ISO-8601, inclusive
  std::vector<std::string> ztd_stations;
  std::vector<std::string> wind_stations;
};

struct ExperimentConfig {
  std::uint64_t seed = 20250522;
  std::string output_dir = "gwindcast_out";
  std::size_t window_steps = 6;
  std::vector<double> leads_min{5, 10, 15, 20, 25, 30};
  std::vector<std::size_t> station_counts{5, 10, 20, 60};
  double reference_lat = 29.3619;
  double reference_lon = 120.0717;
  double ablation_lead_min = 0.0;  // 0 = first entry of leads_min
  std::size_t jobs = 1;

  DataSource data;
  DataFilters filters;
  SplitConfig split;  // seed is derived per lead
  Arch arch = Arch::Transformer;
  std::size_t encoder_blocks = 2;
  std::size_t heads = 4;
  TrainConfig train{.lr = 1e-3, .max_epochs = 40, .patience = 10, .batch_size = 64};
  CdfConfig postprocess;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Rejects keys that the default configuration does not have.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
/// Applies `key.path=value` overrides; values parse as JSON, else as strings.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::vector<std::string>& overrides = {});
/// Throws InvalidConfig on structural problems (leads, counts, ratios, ...).
void validate(const ExperimentConfig& cfg);

/// Lead in minutes -> whole steps of `step_s`; InvalidConfig unless exact.
std::size_t lead_steps(double lead_min, std::int64_t step_s);

/// Inputs after gap filling, filtering, resampling and level mapping.
struct PreparedData {
  ZtdPanel ztd;
  WindCube wind;
  std::map<std::string, std::string> input_digests;  // name -> FNV-1a hex
  GapFillReport gap_report;
};

/// Gap counts filled per ZTD station plus the spatially filled stations.
nlohmann::json gap_report_json(const ZtdPanel& filled, const GapFillReport& report);

PreparedData load_raw_data(const ExperimentConfig& cfg);
PreparedData prepare_data(const ExperimentConfig& cfg);
/// ztd.bin, wind.bin, inputs.json and gap_report.json.
void write_prepared(const std::filesystem::path& dir, const PreparedData& data);
PreparedData read_prepared(const std::filesystem::path& dir);

ZtdPanel slice_time(const ZtdPanel& panel, std::int64_t t0, std::int64_t t1);
WindCube slice_time(const WindCube& cube, std::int64_t t0, std::int64_t t1);

// Per-lead stages shared by the sweep and the file-based subcommands.
struct RunSeeds {
  std::uint64_t split = 0, model = 0, train = 0;
};
RunSeeds run_seeds(std::uint64_t seed, std::size_t lead_steps);

SampleSet lead_samples(const PreparedData& data, const ExperimentConfig& cfg, double lead_min);
ModelConfig lead_model_config(const ExperimentConfig& cfg, const SampleSet& set);
Model model_from_checkpoint(const nn::Checkpoint& ckpt);
/// CdfMap-calibrated, denormalized model outputs for `split` as a cube.
WindCube calibrated_prediction(const Model& model, const CdfMap& map, const SampleSet& set, Split split);
/// Mean-predictor baseline: train-target mean per channel at every sample of `split`.
WindCube mean_predictor(const SampleSet& set, Split split);

struct LeadRun {
  double lead_min = 0.0;
  std::size_t lead_steps = 0;
  nn::Checkpoint checkpoint;
  TrainHistory history;
  CdfMap cdf;
  WindCube prediction;  // calibrated, test split
  WindCube truth;       // test split
  MetricReport report;
};

LeadRun run_lead(const PreparedData& data, const ExperimentConfig& cfg, double lead_min);
/// model.json/.bin, history.csv, cdf_map.json, predictions.bin, truth.bin,
/// metrics.json and run.json.
/// Returns the written paths relative to `dir`.
std::vector<std::string> write_lead_run(const std::filesystem::path& dir, const LeadRun& run);
std::string lead_dir_name(double lead_min);

struct LeadSweepResult {
  std::vector<LeadRun> runs;
  std::vector<MosaicTable> mosaics;
};

LeadSweepResult run_lead_sweep(const ExperimentConfig& cfg, const PreparedData& data, bool write_outputs = true);
LeadSweepResult run_lead_sweep(const ExperimentConfig& cfg);
std::string mosaic_file_name(const MosaicTable& t);
std::vector<std::string> write_mosaics(const std::filesystem::path& dir, const std::vector<MosaicTable>& tables);

struct AblationResult {
  double lead_min = 0.0;
  std::string reference_station;  // wind station nearest the reference point
  std::size_t reference_index = 0;
  std::vector<std::size_t> counts;
  std::vector<MetricReport> reports;  // per count, scored at the reference station
  std::string table_csv;  // k,component,metric,value
  std::string radar_csv;  // k,component,rmse_div10,mae_div10,rmspe,one_minus_r
};

AblationResult run_station_ablation(const ExperimentConfig& cfg, const PreparedData& data,
                                    bool write_outputs = true);
AblationResult run_station_ablation(const ExperimentConfig& cfg);

/// Regular (time x level x lat x lon x component) grid, e.g. reanalysis output.
struct GriddedBaseline {
  TimeAxis axis;
  LevelSpec levels;
  std::vector<double> lats;  // strictly increasing
  std::vector<double> lons;  // strictly increasing
  std::vector<double> values;

  std::size_t index(std::size_t t, std::size_t l, std::size_t i, std::size_t j, std::size_t c) const noexcept {
    return (((t * levels.size() + l) * lats.size() + i) * lons.size() + j) * kComponents + c;
  }
};

/// CSV `timestamp,lat,lon,level,u_ms,v_ms,w_ms` with optional sidecar line
/// `# level_kind=...` (pressure by default); every grid node must be present.
GriddedBaseline parse_gridded_baseline_csv(std::string_view text);
std::string gridded_baseline_to_csv(const GriddedBaseline& grid);

/// Baseline values matched onto the truth cube: nearest grid node by great
/// circle, nearest baseline time (earlier on ties), nearest level in
/// log-pressure. Truth times outside the baseline span stay masked.
WindCube match_gridded_baseline(const GriddedBaseline& grid, const WindCube& truth);
MetricReport compare_gridded_baseline(const GriddedBaseline& grid, const WindCube& truth, double lead_min = 0.0);

struct TimeseriesTable {
  double level = 0.0;
  std::size_t component = 0;
  std::string csv;  // timestamp,pred,truth
};

/// Spatial means over the stations observed in both cubes, per timestamp.
/// Empty `levels` / `components` select all.
std::vector<TimeseriesTable> emit_timeseries(const WindCube& pred, const WindCube& truth,
                                             const std::vector<double>& levels = {},
                                             const std::vector<std::size_t>& components = {});
std::string timeseries_file_name(const TimeseriesTable& t);

/// manifest.json: config, its hash, seed, versions, input digests and the
/// digests of `outputs` (paths relative to `dir`).
void write_manifest(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                    const std::map<std::string, std::string>& input_digests,
                    const std::vector<std::string>& outputs);

}  // namespace gwc
