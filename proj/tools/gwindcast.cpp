// gwindcast command-line driver.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "gwindcast/error.hpp"
#include "gwindcast/harness.hpp"
#include "gwindcast/io.hpp"
#include "gwindcast/neural/checkpoint.hpp"
#include "gwindcast/preprocess.hpp"
#include "gwindcast/synthgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gwc;

namespace {

struct ConfigArgs {
  std::string config;
  ExperimentConfig load(const CLI::App& sub) const { return load_experiment_config(config, sub.remaining()); }
};

void add_config(CLI::App* sub, ConfigArgs& args) {
  sub->add_option("--config", args.config, "Experiment config JSON")->check(CLI::ExistingFile);
  sub->allow_extras();
  sub->footer("Any config field can be overridden with --key.path=value.");
}

void print_report(const MetricReport& r) {
  for (const auto& p : r.pooled) {
    std::cout << "  lead " << io::fmt9(p.lead_min) << " min  " << kComponentNames[p.component]
              << ": rmse " << io::fmt9(p.values.rmse) << "  mae " << io::fmt9(p.values.mae) << "  rmspe "
              << io::fmt9(metric_value(p.values, "rmspe")) << "  r " << io::fmt9(metric_value(p.values, "r"))
              << "\n";
  }
}

std::string json_text(const json& j) { return j.dump(2) + "\n"; }

int cmd_synth(const SynthConfig& cfg, const std::string& start, const fs::path& out) {
  SynthConfig c = cfg;
  if (!start.empty()) c.start_time = io::parse_iso8601(start);
  const SynthData d = generate(c);
  fs::create_directories(out);
  io::write_panel(out / "ztd.bin", d.ztd);
  io::write_cube(out / "wind.bin", d.wind);
  io::write_stations_csv(out / "ztd_stations.csv", d.ztd_stations);
  io::write_stations_csv(out / "wind_stations.csv", d.wind_stations);
  io::write_text(out / "ztd.csv", io::ztd_to_csv(d.ztd));
  io::write_text(out / "wind.csv", io::wind_to_csv(d.wind));
  std::string latent = "timestamp";
  for (std::size_t k = 0; k < d.latent_dim; ++k) latent += ",z" + std::to_string(k);
  latent += "\n";
  for (std::size_t t = 0; t < d.ztd.n_time(); ++t) {
    latent += io::format_iso8601(d.ztd.axis.time_at(t));
    for (std::size_t k = 0; k < d.latent_dim; ++k) latent += "," + io::fmt17(d.latent[t * d.latent_dim + k]);
    latent += "\n";
  }
  io::write_text(out / "latent.csv", latent);
  io::write_text(out / "synth_config.json", json_text(to_json(c)));
  std::cout << "wrote synthetic data (" << d.ztd.n_stations() << " ZTD stations, " << d.wind.stations.size()
            << " wind stations, " << d.ztd.n_time() << " epochs) to " << out.string() << "\n";
  return 0;
}

int cmd_preprocess(const ExperimentConfig& cfg, const fs::path& out) {
  validate(cfg);
  const PreparedData d = prepare_data(cfg);
  write_prepared(out, d);
  write_manifest(out, cfg, d.input_digests, {"ztd.bin", "wind.bin", "inputs.json", "gap_report.json"});
  std::cout << "prepared " << d.ztd.n_time() << " epochs x " << d.ztd.n_stations() << " ZTD stations into "
            << out.string() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const fs::path& data, double lead, const fs::path& run) {
  validate(cfg);
  const SampleSet set = lead_samples(read_prepared(data), cfg, lead);
  Model model(lead_model_config(cfg, set));
  TrainConfig tc = cfg.train;
  tc.seed = run_seeds(cfg.seed, set.lead_steps).train;
  const TrainResult res = train(model, set, tc);
  fs::create_directories(run);
  nn::write_checkpoint(run / "model", res.best);
  io::write_text(run / "history.csv", history_to_csv(res.history));
  io::write_text(run / "run.json", json_text({{"lead_min", lead}, {"lead_steps", set.lead_steps}}));
  std::cout << "trained " << model.parameter_count() << " parameters; best epoch " << res.history.best_epoch
            << " (val mse " << io::fmt9(res.history.best_val_mse) << ")\n";
  return 0;
}

int cmd_calibrate(const ExperimentConfig& cfg, const fs::path& data, double lead, const fs::path& run) {
  validate(cfg);
  const SampleSet set = lead_samples(read_prepared(data), cfg, lead);
  const Model model = model_from_checkpoint(nn::read_checkpoint(run / "model"));
  io::write_text(run / "cdf_map.json", json_text(to_json(fit_cdf_map(model, set, cfg.postprocess))));
  std::cout << "wrote " << (run / "cdf_map.json").string() << "\n";
  return 0;
}

int cmd_predict(const ExperimentConfig& cfg, const fs::path& data, double lead, const fs::path& run,
                const std::string& split_name) {
  validate(cfg);
  Split split = Split::Test;
  if (split_name == "train") split = Split::Train;
  else if (split_name == "val") split = Split::Val;
  else if (split_name != "test") throw Error(Errc::InvalidConfig, "split must be train, val or test");
  const SampleSet set = lead_samples(read_prepared(data), cfg, lead);
  const Model model = model_from_checkpoint(nn::read_checkpoint(run / "model"));
  const CdfMap map = cdf_map_from_json(json::parse(io::read_text(run / "cdf_map.json")));
  io::write_cube(run / "predictions.bin", calibrated_prediction(model, map, set, split));
  io::write_cube(run / "truth.bin", truth_cube(set, split));
  std::cout << "wrote predictions for the " << split_name << " split to " << run.string() << "\n";
  return 0;
}

int cmd_evaluate(const std::vector<std::string>& runs, const fs::path& out) {
  std::vector<MetricReport> reports;
  for (const fs::path run : runs) {
    const double lead = json::parse(io::read_text(run / "run.json")).at("lead_min").get<double>();
    MetricReport r = evaluate_cubes(io::read_cube(run / "predictions.bin"), io::read_cube(run / "truth.bin"), lead);
    io::write_text(run / "metrics.json", json_text(to_json(r)));
    print_report(r);
    reports.push_back(std::move(r));
  }
  if (!out.empty()) write_mosaics(out, mosaic(reports));
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  const LeadSweepResult res = run_lead_sweep(cfg);
  for (const auto& r : res.runs) print_report(r.report);
  std::cout << "outputs in " << cfg.output_dir << "\n";
  return 0;
}

int cmd_ablation(const ExperimentConfig& cfg) {
  const AblationResult res = run_station_ablation(cfg);
  std::cout << "reference station " << res.reference_station << ", lead " << io::fmt9(res.lead_min) << " min\n"
            << res.table_csv << "outputs in " << (fs::path(cfg.output_dir) / "ablation").string() << "\n";
  return 0;
}

int cmd_compare(const fs::path& grid, const fs::path& truth, double lead, const fs::path& out) {
  const MetricReport r =
      compare_gridded_baseline(parse_gridded_baseline_csv(io::read_text(grid)), io::read_cube(truth), lead);
  print_report(r);
  if (!out.empty()) io::write_text(out, json_text(to_json(r)));
  return 0;
}

int cmd_timeseries(const fs::path& pred, const fs::path& truth, const std::vector<double>& levels,
                   const std::vector<std::string>& comps, const fs::path& out) {
  std::vector<std::size_t> idx;
  for (const auto& c : comps) {
    std::size_t i = 0;
    while (i < kComponents && kComponentNames[i] != c) ++i;
    if (i == kComponents) throw Error(Errc::InvalidConfig, "unknown component '" + c + "'");
    idx.push_back(i);
  }
  fs::create_directories(out);
  for (const auto& t : emit_timeseries(io::read_cube(pred), io::read_cube(truth), levels, idx)) {
    io::write_text(out / timeseries_file_name(t), t.csv);
  }
  std::cout << "wrote time series to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"G-WindCast: wind profile forecasting from GNSS zenith tropospheric delay"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  SynthConfig synth;
  std::string synth_start;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "Generate a synthetic coupled ZTD/wind dataset");
  s->add_option("--out", synth_out, "Output directory")->required();
  s->add_option("--seed", synth.seed);
  s->add_option("--n-ztd-stations", synth.n_ztd_stations);
  s->add_option("--n-wind-stations", synth.n_wind_stations);
  s->add_option("--n-levels", synth.n_levels);
  s->add_option("--n-steps", synth.n_steps);
  s->add_option("--latent-dim", synth.latent_dim);
  s->add_option("--noise-std", synth.noise_std);
  s->add_option("--missing-rate", synth.missing_rate);
  s->add_option("--lead-coupling-steps", synth.lead_coupling_steps);
  s->add_option("--nonlinearity", synth.nonlinearity);
  s->add_option("--start-time", synth_start, "ISO-8601 start time");
  s->add_option("--step", synth.step, "Seconds between epochs");
  s->add_option("--center-lat", synth.center_lat);
  s->add_option("--center-lon", synth.center_lon);

  ConfigArgs pre_args;
  std::string pre_out;
  auto* pre = app.add_subcommand("preprocess", "Load, filter, gap-fill and align the input data");
  add_config(pre, pre_args);
  pre->add_option("--out", pre_out, "Prepared data directory")->required();

  struct RunArgs {
    ConfigArgs cfg;
    std::string data, run, split = "test";
    double lead = 0.0;
  };
  RunArgs tr, ca, pr;
  auto add_run = [&](CLI::App* sub, RunArgs& a, const char* run_help) {
    add_config(sub, a.cfg);
    sub->add_option("--data", a.data, "Prepared data directory")->required();
    sub->add_option("--lead", a.lead, "Lead time in minutes")->required();
    sub->add_option("--run", a.run, run_help)->required();
  };
  auto* t = app.add_subcommand("train", "Train a model for one lead time");
  add_run(t, tr, "Run directory to create");
  auto* c = app.add_subcommand("calibrate", "Fit the CDF matching map on the train split");
  add_run(c, ca, "Run directory holding the checkpoint");
  auto* p = app.add_subcommand("predict", "Write calibrated predictions and truth cubes");
  add_run(p, pr, "Run directory holding checkpoint and CDF map");
  p->add_option("--split", pr.split, "train, val or test");

  std::vector<std::string> eval_runs;
  std::string eval_out;
  auto* e = app.add_subcommand("evaluate", "Score run directories and emit mosaic tables");
  e->add_option("--run", eval_runs, "Run directories")->required();
  e->add_option("--out", eval_out, "Directory for mosaic tables");

  ConfigArgs sweep_args, abl_args;
  auto* sw = app.add_subcommand("run-lead-sweep", "Train and score every configured lead time");
  add_config(sw, sweep_args);
  auto* ab = app.add_subcommand("run-station-ablation", "Retrain with the k nearest ZTD stations");
  add_config(ab, abl_args);

  std::string grid, cmp_truth, cmp_out;
  double cmp_lead = 0.0;
  auto* cb = app.add_subcommand("compare-baseline", "Score a gridded baseline against observed wind");
  cb->add_option("--grid", grid, "Gridded baseline CSV")->required()->check(CLI::ExistingFile);
  cb->add_option("--truth", cmp_truth, "Truth wind cube (.bin)")->required()->check(CLI::ExistingFile);
  cb->add_option("--lead", cmp_lead, "Lead label in minutes");
  cb->add_option("--out", cmp_out, "Metrics JSON output");

  std::string ts_pred, ts_truth, ts_out;
  std::vector<double> ts_levels;
  std::vector<std::string> ts_comps;
  auto* ts = app.add_subcommand("emit-timeseries", "Write spatial-mean prediction/truth series");
  ts->add_option("--pred", ts_pred, "Prediction cube (.bin)")->required()->check(CLI::ExistingFile);
  ts->add_option("--truth", ts_truth, "Truth cube (.bin)")->required()->check(CLI::ExistingFile);
  ts->add_option("--out", ts_out, "Output directory")->required();
  ts->add_option("--levels", ts_levels, "Levels to emit (default all)");
  ts->add_option("--components", ts_comps, "Components u, v, w (default all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : static_cast<int>(ExitClass::Config);
  }

  try {
    if (*s) return cmd_synth(synth, synth_start, synth_out);
    if (*pre) return cmd_preprocess(pre_args.load(*pre), pre_out);
    if (*t) return cmd_train(tr.cfg.load(*t), tr.data, tr.lead, tr.run);
    if (*c) return cmd_calibrate(ca.cfg.load(*c), ca.data, ca.lead, ca.run);
    if (*p) return cmd_predict(pr.cfg.load(*p), pr.data, pr.lead, pr.run, pr.split);
    if (*e) return cmd_evaluate(eval_runs, eval_out);
    if (*sw) return cmd_sweep(sweep_args.load(*sw));
    if (*ab) return cmd_ablation(abl_args.load(*ab));
    if (*cb) return cmd_compare(grid, cmp_truth, cmp_lead, cmp_out);
    if (*ts) return cmd_timeseries(ts_pred, ts_truth, ts_levels, ts_comps, ts_out);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return static_cast<int>(exit_class(err.code()));
  } catch (const json::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return static_cast<int>(ExitClass::Config);
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return static_cast<int>(ExitClass::Data);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
