#include "gwindcast/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "gwindcast/error.hpp"
#include "gwindcast/io.hpp"
#include "gwindcast/neural/checkpoint.hpp"
#include "gwindcast/preprocess.hpp"
#include "gwindcast/rng.hpp"

namespace gwc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void bad_config(const std::string& msg) { throw Error(Errc::InvalidConfig, msg); }

void check_known_keys(const json& given, const json& known, const std::string& path) {
  if (!given.is_object()) bad_config("config section '" + path + "' must be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!known.contains(key)) bad_config("unknown config key '" + full + "'");
    if (known.at(key).is_object()) check_known_keys(value, known.at(key), full);
  }
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; results keep index order.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs, Fn fn) {
  std::vector<T> out(n);
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next == n) return;
        i = next++;
      }
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 0; j < std::min(jobs, n); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

bool has_bin_extension(const std::string& path) { return fs::path(path).extension() == ".bin"; }

std::string digest_bytes(const io::Bytes& b) { return io::hex_digest(io::fnv1a(b.data(), b.size())); }

StationTable pick_stations(const StationTable& table, const std::vector<std::string>& ids, const char* what) {
  StationTable subset;
  for (const auto& id : ids) {
    const auto i = table.index_of(id);
    if (!i) bad_config(std::string("filter names unknown ") + what + " station '" + id + "'");
    subset.entries.push_back(table[*i]);
  }
  return restore_table_order(table, subset);
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

double log_pressure(LevelKind kind, double level) {
  return std::log(kind == LevelKind::PressureHPa ? level : height_to_pressure(level));
}

}  // namespace

// ---------------------------------------------------------------- config

json to_json(const ExperimentConfig& c) {
  const auto& d = c.data;
  const auto& f = c.filters;
  const auto& t = c.train;
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"window_steps", c.window_steps},
      {"leads_min", c.leads_min},
      {"station_counts", c.station_counts},
      {"reference", {{"lat", c.reference_lat}, {"lon", c.reference_lon}}},
      {"ablation_lead_min", c.ablation_lead_min},
      {"jobs", c.jobs},
      {"data",
       {{"source", d.kind == DataSourceKind::Synthetic ? "synthetic" : "files"},
        {"synth", to_json(d.synth)},
        {"ztd", d.ztd},
        {"ztd_stations", d.ztd_stations},
        {"wind", d.wind},
        {"wind_stations", d.wind_stations},
        {"step_s", d.step_s},
        {"pressure_levels_hpa", d.pressure_levels_hpa}}},
      {"filters",
       {{"time_start", f.time_start},
        {"time_end", f.time_end},
        {"ztd_stations", f.ztd_stations},
        {"wind_stations", f.wind_stations}}},
      {"split", {{"ratios", c.split.ratios}}},
      {"model",
       {{"arch", std::string(to_string(c.arch))}, {"encoder_blocks", c.encoder_blocks}, {"heads", c.heads}}},
      {"train",
       {{"lr", t.lr},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"eps", t.eps},
        {"max_epochs", t.max_epochs},
        {"patience", t.patience},
        {"batch_size", t.batch_size}}},
      {"postprocess",
       {{"mode", std::string(to_string(c.postprocess.mode))},
        {"pooling", std::string(to_string(c.postprocess.pooling))},
        {"n_quantiles", c.postprocess.n_quantiles}}},
  };
}

ExperimentConfig experiment_config_from_json(const json& given) {
  const json defaults = to_json(ExperimentConfig{});
  check_known_keys(given, defaults, "");
  json j = defaults;
  j.merge_patch(given);
  ExperimentConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.output_dir = j.at("output_dir").get<std::string>();
    c.window_steps = j.at("window_steps").get<std::size_t>();
    c.leads_min = j.at("leads_min").get<std::vector<double>>();
    c.station_counts = j.at("station_counts").get<std::vector<std::size_t>>();
    c.reference_lat = j.at("reference").at("lat").get<double>();
    c.reference_lon = j.at("reference").at("lon").get<double>();
    c.ablation_lead_min = j.at("ablation_lead_min").get<double>();
    c.jobs = j.at("jobs").get<std::size_t>();

    const json& d = j.at("data");
    const auto source = d.at("source").get<std::string>();
    if (source == "synthetic") c.data.kind = DataSourceKind::Synthetic;
    else if (source == "files") c.data.kind = DataSourceKind::Files;
    else bad_config("data.source must be 'synthetic' or 'files'");
    c.data.synth = synth_config_from_json(d.at("synth"));
    c.data.ztd = d.at("ztd").get<std::string>();
    c.data.ztd_stations = d.at("ztd_stations").get<std::string>();
    c.data.wind = d.at("wind").get<std::string>();
    c.data.wind_stations = d.at("wind_stations").get<std::string>();
    c.data.step_s = d.at("step_s").get<std::int64_t>();
    c.data.pressure_levels_hpa = d.at("pressure_levels_hpa").get<std::vector<double>>();

    const json& f = j.at("filters");
    c.filters.time_start = f.at("time_start").get<std::string>();
    c.filters.time_end = f.at("time_end").get<std::string>();
    c.filters.ztd_stations = f.at("ztd_stations").get<std::vector<std::string>>();
    c.filters.wind_stations = f.at("wind_stations").get<std::vector<std::string>>();

    const auto ratios = j.at("split").at("ratios").get<std::vector<double>>();
    if (ratios.size() != 3) bad_config("split.ratios needs three entries");
    std::copy(ratios.begin(), ratios.end(), c.split.ratios.begin());

    const json& m = j.at("model");
    c.arch = arch_from_string(m.at("arch").get<std::string>());
    c.encoder_blocks = m.at("encoder_blocks").get<std::size_t>();
    c.heads = m.at("heads").get<std::size_t>();

    const json& t = j.at("train");
    c.train.lr = t.at("lr").get<double>();
    c.train.beta1 = t.at("beta1").get<double>();
    c.train.beta2 = t.at("beta2").get<double>();
    c.train.eps = t.at("eps").get<double>();
    c.train.max_epochs = t.at("max_epochs").get<std::size_t>();
    c.train.patience = t.at("patience").get<std::size_t>();
    c.train.batch_size = t.at("batch_size").get<std::size_t>();

    const json& p = j.at("postprocess");
    c.postprocess.mode = cdf_mode_from_string(p.at("mode").get<std::string>());
    c.postprocess.pooling = cdf_pooling_from_string(p.at("pooling").get<std::string>());
    c.postprocess.n_quantiles = p.at("n_quantiles").get<std::size_t>();
  } catch (const json::exception& e) {
    bad_config(std::string("malformed config: ") + e.what());
  }
  return c;
}

json apply_overrides(json j, const std::vector<std::string>& overrides) {
  for (std::string item : overrides) {
    if (item.rfind("--", 0) == 0) item.erase(0, 2);
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) bad_config("override '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string text = item.substr(eq + 1);
    std::string pointer;
    std::stringstream parts(key);
    for (std::string part; std::getline(parts, part, '.');) pointer += "/" + part;
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) bad_config("unknown config key '" + key + "'");
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    j[ptr] = value;
  }
  return j;
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json j = to_json(ExperimentConfig{});
  if (!path.empty()) {
    const json file = json::parse(io::read_text(path), nullptr, false);
    if (file.is_discarded()) bad_config("config file " + path.string() + " is not valid JSON");
    check_known_keys(file, j, "");
    j.merge_patch(file);
  }
  return experiment_config_from_json(apply_overrides(std::move(j), overrides));
}

void validate(const ExperimentConfig& c) {
  if (c.window_steps < 1) bad_config("window_steps must be >= 1");
  if (c.leads_min.empty()) bad_config("leads_min must not be empty");
  for (double l : c.leads_min)
    if (!(l > 0.0)) bad_config("leads must be positive");
  for (std::size_t i = 0; i < c.station_counts.size(); ++i) {
    if (c.station_counts[i] < 1) bad_config("station counts must be >= 1");
    if (i > 0 && c.station_counts[i] <= c.station_counts[i - 1]) {
      bad_config("station_counts must be sorted ascending");
    }
  }
  if (c.ablation_lead_min < 0.0) bad_config("ablation_lead_min must be >= 0");
  if (c.jobs < 1) bad_config("jobs must be >= 1");
  if (c.encoder_blocks > 64 || c.heads < 1) bad_config("invalid model shape");
  if (c.data.step_s <= 0) bad_config("data.step_s must be positive");
  if (c.data.kind == DataSourceKind::Synthetic) validate(c.data.synth);
  double rsum = 0.0;
  for (double r : c.split.ratios) {
    if (!(r >= 0.0)) bad_config("split ratios must be non-negative");
    rsum += r;
  }
  if (std::abs(rsum - 1.0) > 1e-12) bad_config("split ratios must sum to 1");
  if (c.postprocess.n_quantiles < 2) bad_config("postprocess.n_quantiles must be >= 2");
  validate(c.train);
}

std::size_t lead_steps(double lead_min, std::int64_t step_s) {
  const double steps = lead_min * 60.0 / static_cast<double>(step_s);
  const double rounded = std::round(steps);
  if (!(rounded >= 1.0) || std::abs(steps - rounded) > 1e-9) {
    bad_config("lead " + io::fmt9(lead_min) + " min is not a positive multiple of the " +
               std::to_string(step_s) + " s step");
  }
  return static_cast<std::size_t>(rounded);
}

// ---------------------------------------------------------------- data

ZtdPanel slice_time(const ZtdPanel& p, std::int64_t t0, std::int64_t t1) {
  std::size_t k0 = p.n_time(), k1 = 0;
  for (std::size_t k = 0; k < p.n_time(); ++k) {
    const auto t = p.axis.time_at(k);
    if (t >= t0 && t <= t1) {
      k0 = std::min(k0, k);
      k1 = k + 1;
    }
  }
  if (k0 >= k1) throw Error(Errc::EmptyOverlap, "time window leaves no ZTD epochs");
  ZtdPanel out = ZtdPanel::empty_like({p.axis.time_at(k0), p.axis.step, k1 - k0}, p.stations);
  const std::size_t S = p.n_stations();
  std::copy(p.values.begin() + static_cast<std::ptrdiff_t>(k0 * S),
            p.values.begin() + static_cast<std::ptrdiff_t>(k1 * S), out.values.begin());
  std::copy(p.mask.begin() + static_cast<std::ptrdiff_t>(k0 * S), p.mask.begin() + static_cast<std::ptrdiff_t>(k1 * S),
            out.mask.begin());
  return out;
}

WindCube slice_time(const WindCube& c, std::int64_t t0, std::int64_t t1) {
  std::size_t k0 = c.axis.count, k1 = 0;
  for (std::size_t k = 0; k < c.axis.count; ++k) {
    const auto t = c.axis.time_at(k);
    if (t >= t0 && t <= t1) {
      k0 = std::min(k0, k);
      k1 = k + 1;
    }
  }
  if (k0 >= k1) throw Error(Errc::EmptyOverlap, "time window leaves no wind epochs");
  WindCube out = c;
  out.axis = {c.axis.time_at(k0), c.axis.step, k1 - k0};
  const std::size_t F = c.frame_size();
  out.values.assign(c.values.begin() + static_cast<std::ptrdiff_t>(k0 * F),
                    c.values.begin() + static_cast<std::ptrdiff_t>(k1 * F));
  out.mask.assign(c.mask.begin() + static_cast<std::ptrdiff_t>(k0 * F),
                  c.mask.begin() + static_cast<std::ptrdiff_t>(k1 * F));
  return out;
}

PreparedData load_raw_data(const ExperimentConfig& cfg) {
  PreparedData out;
  const auto& d = cfg.data;
  if (d.kind == DataSourceKind::Synthetic) {
    SynthData s = generate(d.synth);
    out.input_digests["synthetic_ztd"] = digest_bytes(io::encode_panel(s.ztd));
    out.input_digests["synthetic_wind"] = digest_bytes(io::encode_cube(s.wind));
    out.ztd = std::move(s.ztd);
    out.wind = std::move(s.wind);
    return out;
  }
  if (d.ztd.empty() || d.wind.empty()) bad_config("file data source needs data.ztd and data.wind");
  const io::Bytes ztd_bytes = io::read_bytes(d.ztd);
  out.input_digests[d.ztd] = digest_bytes(ztd_bytes);
  if (has_bin_extension(d.ztd)) {
    out.ztd = io::decode_panel(ztd_bytes);
  } else {
    if (d.ztd_stations.empty()) bad_config("CSV ZTD input needs data.ztd_stations");
    const std::string text(ztd_bytes.begin(), ztd_bytes.end());
    out.ztd = io::parse_ztd_csv(text, io::read_stations_csv(d.ztd_stations), d.step_s);
  }
  const io::Bytes wind_bytes = io::read_bytes(d.wind);
  out.input_digests[d.wind] = digest_bytes(wind_bytes);
  if (has_bin_extension(d.wind)) {
    out.wind = io::decode_cube(wind_bytes);
  } else {
    if (d.wind_stations.empty()) bad_config("CSV wind input needs data.wind_stations");
    const std::string text(wind_bytes.begin(), wind_bytes.end());
    out.wind = io::wind_cube_from_records(io::parse_wind_csv(text), io::read_stations_csv(d.wind_stations), d.step_s);
  }
  return out;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  PreparedData d = load_raw_data(cfg);
  const auto& f = cfg.filters;
  if (!f.time_start.empty() || !f.time_end.empty()) {
    const auto t0 = f.time_start.empty() ? std::numeric_limits<std::int64_t>::min() : io::parse_iso8601(f.time_start);
    const auto t1 = f.time_end.empty() ? std::numeric_limits<std::int64_t>::max() : io::parse_iso8601(f.time_end);
    d.ztd = slice_time(d.ztd, t0, t1);
    d.wind = slice_time(d.wind, t0, t1);
  }
  if (!f.ztd_stations.empty()) d.ztd = select_panel_stations(d.ztd, pick_stations(d.ztd.stations, f.ztd_stations, "ZTD"));
  if (!f.wind_stations.empty()) {
    d.wind = select_cube_stations(d.wind, pick_stations(d.wind.stations, f.wind_stations, "wind"));
  }
  d.ztd = fill_gaps(d.ztd, &d.gap_report);
  if (d.wind.levels.kind == LevelKind::HeightM) {
    if (cfg.data.pressure_levels_hpa.empty()) bad_config("height-level wind needs data.pressure_levels_hpa");
    d.wind = interpolate_to_pressure_levels(d.wind, {LevelKind::PressureHPa, cfg.data.pressure_levels_hpa});
  }
  if (d.wind.axis.step != d.ztd.axis.step) d.wind = resample_time(d.wind, d.ztd.axis.step);
  return d;
}

void write_prepared(const fs::path& dir, const PreparedData& data) {
  fs::create_directories(dir);
  io::write_panel(dir / "ztd.bin", data.ztd);
  io::write_cube(dir / "wind.bin", data.wind);
  io::write_text(dir / "inputs.json", json_text(json(data.input_digests)));
  io::write_text(dir / "gap_report.json", json_text(gap_report_json(data.ztd, data.gap_report)));
}

json gap_report_json(const ZtdPanel& filled, const GapFillReport& report) {
  json per_station = json::object();
  for (std::size_t s = 0; s < report.filled_per_station.size() && s < filled.n_stations(); ++s) {
    per_station[filled.stations[s].id] = report.filled_per_station[s];
  }
  json spatial = json::array();
  for (std::size_t s : report.spatially_filled_stations) spatial.push_back(filled.stations[s].id);
  return {{"filled_per_station", per_station}, {"spatially_filled_stations", spatial}};
}

PreparedData read_prepared(const fs::path& dir) {
  PreparedData d;
  d.ztd = io::read_panel(dir / "ztd.bin");
  d.wind = io::read_cube(dir / "wind.bin");
  if (fs::exists(dir / "inputs.json")) {
    d.input_digests = json::parse(io::read_text(dir / "inputs.json")).get<std::map<std::string, std::string>>();
  }
  return d;
}

// ---------------------------------------------------------------- per lead

RunSeeds run_seeds(std::uint64_t seed, std::size_t steps) {
  return {derive_seed(seed, 1, steps), derive_seed(seed, 2, steps), derive_seed(seed, 3, steps)};
}

SampleSet lead_samples(const PreparedData& data, const ExperimentConfig& cfg, double lead_min) {
  const std::size_t steps = lead_steps(lead_min, data.ztd.axis.step);
  SplitConfig split = cfg.split;
  split.seed = run_seeds(cfg.seed, steps).split;
  return build_samples(data.ztd, data.wind, cfg.window_steps, steps, split);
}

ModelConfig lead_model_config(const ExperimentConfig& cfg, const SampleSet& set) {
  ModelConfig m;
  m.arch = cfg.arch;
  m.window_steps = set.window_steps;
  m.n_stations = set.n_features();
  m.encoder_blocks = cfg.encoder_blocks;
  m.heads = cfg.heads;
  m.output_dim = set.output_dim();
  m.seed = run_seeds(cfg.seed, set.lead_steps).model;
  return m;
}

Model model_from_checkpoint(const nn::Checkpoint& ckpt) {
  json header;
  nn::decode_checkpoint(ckpt, &header);
  if (!header.contains("model_config")) throw Error(Errc::ParseError, "checkpoint has no model_config");
  Model m(model_config_from_json(header.at("model_config")));
  m.load(ckpt);
  return m;
}

WindCube calibrated_prediction(const Model& model, const CdfMap& map, const SampleSet& set, Split split) {
  const auto idx = set.indices(split);
  if (idx.empty()) throw Error(Errc::SplitEmpty, std::string(to_string(split)) + " split is empty");
  return rows_to_cube(set, idx, apply_cdf_map(map, predict_outputs(model, set, idx)));
}

WindCube mean_predictor(const SampleSet& set, Split split) {
  if (!set.normalized()) throw Error(Errc::UnnormalizedInput, "sample set carries no normalization statistics");
  const auto idx = set.indices(split);
  if (idx.empty()) throw Error(Errc::SplitEmpty, std::string(to_string(split)) + " split is empty");
  const std::size_t o = set.output_dim();
  nn::Tensor rows(nn::Shape{idx.size(), o});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t j = 0; j < o; ++j) rows[r * o + j] = set.target_stats->mean[j];
  return rows_to_cube(set, idx, rows);
}

LeadRun run_lead(const PreparedData& data, const ExperimentConfig& cfg, double lead_min) {
  const SampleSet set = lead_samples(data, cfg, lead_min);
  LeadRun run;
  run.lead_min = lead_min;
  run.lead_steps = set.lead_steps;
  Model model(lead_model_config(cfg, set));
  TrainConfig tc = cfg.train;
  tc.seed = run_seeds(cfg.seed, set.lead_steps).train;
  TrainResult trained = train(model, set, tc);
  run.checkpoint = std::move(trained.best);
  run.history = std::move(trained.history);
  run.cdf = fit_cdf_map(model, set, cfg.postprocess);
  run.prediction = calibrated_prediction(model, run.cdf, set, Split::Test);
  run.truth = truth_cube(set, Split::Test);
  run.report = evaluate_cubes(run.prediction, run.truth, lead_min);
  return run;
}

std::string lead_dir_name(double lead_min) {
  char buf[48];
  if (lead_min == std::floor(lead_min) && lead_min < 1e6) {
    std::snprintf(buf, sizeof buf, "lead_%03lld", static_cast<long long>(lead_min));
    return buf;
  }
  std::string s = "lead_" + io::fmt9(lead_min);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s;
}

std::vector<std::string> write_lead_run(const fs::path& dir, const LeadRun& run) {
  fs::create_directories(dir);
  nn::write_checkpoint(dir / "model", run.checkpoint);
  io::write_text(dir / "history.csv", history_to_csv(run.history));
  io::write_text(dir / "cdf_map.json", json_text(to_json(run.cdf)));
  io::write_cube(dir / "predictions.bin", run.prediction);
  io::write_cube(dir / "truth.bin", run.truth);
  io::write_text(dir / "metrics.json", json_text(to_json(run.report)));
  io::write_text(dir / "run.json", json_text({{"lead_min", run.lead_min}, {"lead_steps", run.lead_steps}}));
  return {"model.json", "model.bin", "history.csv", "cdf_map.json", "predictions.bin",
          "truth.bin",  "metrics.json", "run.json"};
}

std::string mosaic_file_name(const MosaicTable& t) { return "mosaic_" + t.metric + "_" + t.component + ".csv"; }

std::vector<std::string> write_mosaics(const fs::path& dir, const std::vector<MosaicTable>& tables) {
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (const auto& t : tables) {
    names.push_back(mosaic_file_name(t));
    io::write_text(dir / names.back(), t.csv);
  }
  return names;
}

LeadSweepResult run_lead_sweep(const ExperimentConfig& cfg, const PreparedData& data, bool write_outputs) {
  validate(cfg);
  LeadSweepResult res;
  res.runs = parallel_map<LeadRun>(cfg.leads_min.size(), cfg.jobs,
                                   [&](std::size_t i) { return run_lead(data, cfg, cfg.leads_min[i]); });
  std::vector<MetricReport> reports;
  for (const auto& r : res.runs) reports.push_back(r.report);
  res.mosaics = mosaic(reports);
  if (write_outputs) {
    const fs::path out = cfg.output_dir;
    std::vector<std::string> outputs;
    for (const auto& r : res.runs) {
      const std::string sub = lead_dir_name(r.lead_min);
      for (const auto& f : write_lead_run(out / sub, r)) outputs.push_back(sub + "/" + f);
    }
    for (const auto& f : write_mosaics(out, res.mosaics)) outputs.push_back(f);
    write_manifest(out, cfg, data.input_digests, outputs);
  }
  return res;
}

LeadSweepResult run_lead_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  return run_lead_sweep(cfg, prepare_data(cfg));
}

// ---------------------------------------------------------------- ablation

AblationResult run_station_ablation(const ExperimentConfig& cfg, const PreparedData& data, bool write_outputs) {
  validate(cfg);
  if (cfg.station_counts.empty()) bad_config("station_counts must not be empty");
  const StationTable& ztd_stations = data.ztd.stations;
  for (std::size_t k : cfg.station_counts) {
    if (k > ztd_stations.size()) {
      throw Error(Errc::KTooLarge, "station count " + std::to_string(k) + " exceeds the " +
                                       std::to_string(ztd_stations.size()) + " available ZTD stations");
    }
  }
  AblationResult res;
  res.lead_min = cfg.ablation_lead_min > 0.0 ? cfg.ablation_lead_min : cfg.leads_min.front();
  res.counts = cfg.station_counts;
  const StationTable ref = select_nearest_stations(data.wind.stations, cfg.reference_lat, cfg.reference_lon, 1);
  res.reference_station = ref[0].id;
  res.reference_index = *data.wind.stations.index_of(ref[0].id);
  const std::size_t ref_index = res.reference_index;

  const auto runs = parallel_map<LeadRun>(res.counts.size(), cfg.jobs, [&](std::size_t i) {
    const StationTable subset = restore_table_order(
        ztd_stations, select_nearest_stations(ztd_stations, cfg.reference_lat, cfg.reference_lon, res.counts[i]));
    PreparedData sub{select_panel_stations(data.ztd, subset), data.wind, {}, {}};
    return run_lead(sub, cfg, res.lead_min);
  });
  for (const auto& r : runs) {
    res.reports.push_back(evaluate_cubes(r.prediction, r.truth, res.lead_min, std::span(&ref_index, 1)));
  }

  std::string table = "k,component,metric,value\n";
  std::string radar = "k,component,rmse_div10,mae_div10,rmspe,one_minus_r\n";
  for (std::size_t i = 0; i < res.counts.size(); ++i) {
    const std::string k = std::to_string(res.counts[i]);
    for (const auto& p : res.reports[i].pooled) {
      const std::string comp(kComponentNames[p.component]);
      for (auto name : kMetricNames) {
        table += k + "," + comp + "," + std::string(name) + "," + io::fmt9(metric_value(p.values, name)) + "\n";
      }
      radar += k + "," + comp + "," + io::fmt9(p.values.rmse / 10.0) + "," + io::fmt9(p.values.mae / 10.0) + "," +
               io::fmt9(metric_value(p.values, "rmspe")) + "," + io::fmt9(1.0 - metric_value(p.values, "r")) +
               "\n";
    }
  }
  res.table_csv = std::move(table);
  res.radar_csv = std::move(radar);

  if (write_outputs) {
    const fs::path out = fs::path(cfg.output_dir) / "ablation";
    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      char sub[32];
      std::snprintf(sub, sizeof sub, "k_%04zu", res.counts[i]);
      for (const auto& f : write_lead_run(out / sub, runs[i])) outputs.push_back(std::string(sub) + "/" + f);
      io::write_text(out / sub / "reference_metrics.json", json_text(to_json(res.reports[i])));
      outputs.push_back(std::string(sub) + "/reference_metrics.json");
    }
    io::write_text(out / "ablation_vs_count.csv", res.table_csv);
    io::write_text(out / "radar.csv", res.radar_csv);
    outputs.insert(outputs.end(), {"ablation_vs_count.csv", "radar.csv"});
    write_manifest(out, cfg, data.input_digests, outputs);
  }
  return res;
}

AblationResult run_station_ablation(const ExperimentConfig& cfg) {
  validate(cfg);
  return run_station_ablation(cfg, prepare_data(cfg));
}

// ---------------------------------------------------------------- baseline

GriddedBaseline parse_gridded_baseline_csv(std::string_view text) {
  struct Row {
    std::int64_t t;
    double lat, lon, level, u, v, w;
  };
  std::vector<Row> rows;
  LevelKind kind = LevelKind::PressureHPa;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "# level_kind=";
      if (line.rfind(key, 0) == 0) {
        const auto k = level_kind_from_string(line.substr(key.size()));
        if (!k) throw Error(Errc::ParseError, "unknown level kind on line " + std::to_string(line_no));
        kind = *k;
      }
      continue;
    }
    if (!header_seen) {
      if (line != "timestamp,lat,lon,level,u_ms,v_ms,w_ms") {
        throw Error(Errc::ParseError, "gridded baseline header must be timestamp,lat,lon,level,u_ms,v_ms,w_ms");
      }
      header_seen = true;
      continue;
    }
    const auto f = io::split_csv_line(line);
    if (f.size() != 7) throw Error(Errc::ParseError, "expected 7 fields on line " + std::to_string(line_no));
    try {
      rows.push_back({io::parse_iso8601(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]),
                      std::stod(f[5]), std::stod(f[6])});
    } catch (const std::logic_error&) {
      throw Error(Errc::ParseError, "bad number on line " + std::to_string(line_no));
    }
  }
  if (rows.empty()) throw Error(Errc::EmptyInput, "gridded baseline has no rows");

  auto unique_sorted = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };
  std::vector<double> lats, lons, levels;
  std::vector<std::int64_t> times;
  for (const auto& r : rows) {
    lats.push_back(r.lat);
    lons.push_back(r.lon);
    levels.push_back(r.level);
    times.push_back(r.t);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  GriddedBaseline g;
  g.lats = unique_sorted(lats);
  g.lons = unique_sorted(lons);
  auto lv = unique_sorted(levels);
  if (kind == LevelKind::PressureHPa) std::reverse(lv.begin(), lv.end());
  g.levels = {kind, lv};
  const std::int64_t step = times.size() > 1 ? times[1] - times[0] : 3600;
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] - times[i - 1] != step) throw Error(Errc::ParseError, "gridded baseline times are not uniform");
  }
  g.axis = {times.front(), step, times.size()};
  const std::size_t n_nodes = g.axis.count * g.levels.size() * g.lats.size() * g.lons.size();
  g.values.assign(n_nodes * kComponents, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::uint8_t> seen(n_nodes, 0);
  auto pos = [](const std::vector<double>& axis, double x) {
    return static_cast<std::size_t>(std::lower_bound(axis.begin(), axis.end(), x) - axis.begin());
  };
  for (const auto& r : rows) {
    const std::size_t t = *g.axis.index_of(r.t);
    const auto li = static_cast<std::size_t>(std::find(lv.begin(), lv.end(), r.level) - lv.begin());
    const std::size_t node = g.index(t, li, pos(g.lats, r.lat), pos(g.lons, r.lon), 0);
    if (seen[node / kComponents]) throw Error(Errc::ParseError, "duplicate gridded baseline node");
    seen[node / kComponents] = 1;
    g.values[node] = r.u;
    g.values[node + 1] = r.v;
    g.values[node + 2] = r.w;
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error(Errc::ParseError, "gridded baseline is missing grid nodes");
  }
  return g;
}

std::string gridded_baseline_to_csv(const GriddedBaseline& g) {
  std::string out = "# level_kind=" + std::string(to_string(g.levels.kind)) + "\n";
  out += "timestamp,lat,lon,level,u_ms,v_ms,w_ms\n";
  for (std::size_t t = 0; t < g.axis.count; ++t)
    for (std::size_t l = 0; l < g.levels.size(); ++l)
      for (std::size_t i = 0; i < g.lats.size(); ++i)
        for (std::size_t j = 0; j < g.lons.size(); ++j) {
          const std::size_t n = g.index(t, l, i, j, 0);
          out += io::format_iso8601(g.axis.time_at(t)) + "," + io::fmt17(g.lats[i]) + "," + io::fmt17(g.lons[j]) +
                 "," + io::fmt17(g.levels.values[l]) + "," + io::fmt17(g.values[n]) + "," +
                 io::fmt17(g.values[n + 1]) + "," + io::fmt17(g.values[n + 2]) + "\n";
        }
  return out;
}

WindCube match_gridded_baseline(const GriddedBaseline& g, const WindCube& truth) {
  if (truth.components != kComponents) throw Error(Errc::ShapeMismatch, "truth cube needs 3 components");
  if (g.axis.count == 0 || g.lats.empty() || g.lons.empty() || g.levels.size() == 0) {
    throw Error(Errc::EmptyInput, "gridded baseline is empty");
  }
  const std::size_t S = truth.stations.size();
  std::vector<std::size_t> gi(S), gj(S);
  for (std::size_t s = 0; s < S; ++s) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.lats.size(); ++i)
      for (std::size_t j = 0; j < g.lons.size(); ++j) {
        const double d = haversine_km(truth.stations[s].lat, truth.stations[s].lon, g.lats[i], g.lons[j]);
        if (d < best) {
          best = d;
          gi[s] = i;
          gj[s] = j;
        }
      }
  }
  const std::size_t L = truth.levels.size();
  std::vector<std::size_t> gl(L);
  for (std::size_t l = 0; l < L; ++l) {
    const double target = log_pressure(truth.levels.kind, truth.levels.values[l]);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < g.levels.size(); ++k) {
      const double d = std::abs(log_pressure(g.levels.kind, g.levels.values[k]) - target);
      if (d < best) {
        best = d;
        gl[l] = k;
      }
    }
  }

  WindCube out = WindCube::empty_like(truth.axis, truth.levels, truth.stations);
  bool overlap = false;
  for (std::size_t t = 0; t < truth.axis.count; ++t) {
    const std::int64_t tt = truth.axis.time_at(t);
    if (tt < g.axis.start || tt > g.axis.end()) continue;
    overlap = true;
    const std::int64_t off = tt - g.axis.start;
    auto k = static_cast<std::size_t>(off / g.axis.step);
    if (2 * (off % g.axis.step) > g.axis.step) ++k;
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t c = 0; c < kComponents; ++c) {
          const std::size_t o = out.index(t, l, s, c);
          out.values[o] = g.values[g.index(k, gl[l], gi[s], gj[s], c)];
          out.mask[o] = 1;
        }
  }
  if (!overlap) throw Error(Errc::NoTemporalOverlap, "no truth epoch falls inside the baseline span");
  return out;
}

MetricReport compare_gridded_baseline(const GriddedBaseline& g, const WindCube& truth, double lead_min) {
  return evaluate_cubes(match_gridded_baseline(g, truth), truth, lead_min);
}

// ---------------------------------------------------------------- time series

std::vector<TimeseriesTable> emit_timeseries(const WindCube& pred, const WindCube& truth,
                                             const std::vector<double>& levels,
                                             const std::vector<std::size_t>& components) {
  if (!(pred.axis == truth.axis) || !(pred.levels == truth.levels) || !(pred.stations == truth.stations) ||
      pred.components != truth.components) {
    throw Error(Errc::Misaligned, "prediction and truth cubes differ in axes");
  }
  std::vector<std::size_t> lsel, csel = components;
  if (levels.empty()) {
    for (std::size_t l = 0; l < truth.levels.size(); ++l) lsel.push_back(l);
  } else {
    for (double v : levels) {
      const auto it = std::find(truth.levels.values.begin(), truth.levels.values.end(), v);
      if (it == truth.levels.values.end()) bad_config("level " + io::fmt9(v) + " is not on the cube");
      lsel.push_back(static_cast<std::size_t>(it - truth.levels.values.begin()));
    }
  }
  if (csel.empty()) {
    for (std::size_t c = 0; c < truth.components; ++c) csel.push_back(c);
  }
  for (std::size_t c : csel)
    if (c >= truth.components) bad_config("component index out of range");

  std::vector<TimeseriesTable> out;
  const std::size_t S = truth.stations.size();
  for (std::size_t l : lsel)
    for (std::size_t c : csel) {
      TimeseriesTable tab{truth.levels.values[l], c, "timestamp,pred,truth\n"};
      for (std::size_t t = 0; t < truth.axis.count; ++t) {
        double sp = 0.0, st = 0.0;
        std::size_t n = 0;
        for (std::size_t s = 0; s < S; ++s) {
          const std::size_t i = truth.index(t, l, s, c);
          if (!pred.mask[i] || !truth.mask[i] || !std::isfinite(pred.values[i]) || !std::isfinite(truth.values[i])) {
            continue;
          }
          sp += pred.values[i];
          st += truth.values[i];
          ++n;
        }
        if (n == 0) continue;
        const auto dn = static_cast<double>(n);
        tab.csv += io::format_iso8601(truth.axis.time_at(t)) + "," + io::fmt9(sp / dn) + "," + io::fmt9(st / dn) + "\n";
      }
      out.push_back(std::move(tab));
    }
  return out;
}

std::string timeseries_file_name(const TimeseriesTable& t) {
  return "timeseries_" + io::fmt9(t.level) + "_" + std::string(kComponentNames[t.component]) + ".csv";
}

// ---------------------------------------------------------------- manifest

void write_manifest(const fs::path& dir, const ExperimentConfig& cfg,
                    const std::map<std::string, std::string>& input_digests,
                    const std::vector<std::string>& outputs) {
  const json config = to_json(cfg);
  json out_digests = json::object();
  for (const auto& rel : outputs) out_digests[rel] = digest_bytes(io::read_bytes(dir / rel));
  const json manifest = {
      {"tool", "gwindcast"},
      {"version", std::string(kVersion)},
      {"compiler", __VERSION__},
      {"formats", {{"checkpoint", 1}, {"cdf_map", 1}, {"panel", "GWCZ"}, {"cube", "GWCW"}}},
      {"seed", cfg.seed},
      {"config_hash", io::hex_digest(io::fnv1a(config.dump()))},
      {"config", config},
      {"inputs", input_digests},
      {"outputs", out_digests},
  };
  io::write_text(dir / "manifest.json", json_text(manifest));
}

}  // namespace gwc
