#include "gwindcast/synthgen.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>

#include "gwindcast/error.hpp"
#include "gwindcast/model.hpp"
#include "gwindcast/preprocess.hpp"
#include "gwindcast/rng.hpp"

namespace gwc {

using nlohmann::json;

namespace {

constexpr double kArPhi = 0.95;
constexpr double kSinAmplitude = 0.7;
constexpr double kPeriodsSec[2] = {3.0 * 3600.0, 24.0 * 3600.0};
constexpr double kStandardLevels[7] = {1000, 925, 850, 700, 600, 500, 400};

enum Stream : std::uint64_t { kStations = 1, kLatent, kWeights, kWindMix, kZtdNoise, kWindNoise, kMask };

StationTable jittered_grid(std::size_t n, double clat, double clon, double spacing, const char* prefix,
                           Rng& rng) {
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const double half = 0.5 * static_cast<double>(side - 1);
  StationTable t;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(i / side) - half;
    const double c = static_cast<double>(i % side) - half;
    char id[32];
    std::snprintf(id, sizeof id, "%s%04zu", prefix, i + 1);
    t.entries.push_back({id, clat + spacing * (r + rng.uniform(-0.3, 0.3)),
                         clon + spacing * (c + rng.uniform(-0.3, 0.3))});
  }
  return t;
}

LevelSpec synth_levels(std::size_t n) {
  LevelSpec l{LevelKind::PressureHPa, {}};
  for (std::size_t i = 0; i < n; ++i) {
    l.values.push_back(i < 7 ? kStandardLevels[i] : 400.0 - 50.0 * static_cast<double>(i - 6));
  }
  return l;
}

}  // namespace

void validate(const SynthConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (c.n_ztd_stations < 1 || c.n_wind_stations < 1 || c.n_levels < 1 || c.n_steps < 1 || c.latent_dim < 1) {
    fail("synthetic counts must be >= 1");
  }
  if (c.n_levels > 14) fail("at most 14 synthetic pressure levels");
  if (!(c.noise_std >= 0.0 && c.noise_std < 1.0)) fail("noise_std must lie in [0, 1)");
  if (!(c.missing_rate >= 0.0 && c.missing_rate < 1.0)) fail("missing_rate must lie in [0, 1)");
  if (!(c.nonlinearity >= 0.0)) fail("nonlinearity must be >= 0");
  if (c.step <= 0) fail("step must be positive");
}

json to_json(const SynthConfig& c) {
  return {{"seed", c.seed},
          {"n_ztd_stations", c.n_ztd_stations},
          {"n_wind_stations", c.n_wind_stations},
          {"n_levels", c.n_levels},
          {"n_steps", c.n_steps},
          {"latent_dim", c.latent_dim},
          {"noise_std", c.noise_std},
          {"missing_rate", c.missing_rate},
          {"lead_coupling_steps", c.lead_coupling_steps},
          {"nonlinearity", c.nonlinearity},
          {"start_time", c.start_time},
          {"step", c.step},
          {"center_lat", c.center_lat},
          {"center_lon", c.center_lon}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("seed", c.seed);
  get("n_ztd_stations", c.n_ztd_stations);
  get("n_wind_stations", c.n_wind_stations);
  get("n_levels", c.n_levels);
  get("n_steps", c.n_steps);
  get("latent_dim", c.latent_dim);
  get("noise_std", c.noise_std);
  get("missing_rate", c.missing_rate);
  get("lead_coupling_steps", c.lead_coupling_steps);
  get("nonlinearity", c.nonlinearity);
  get("start_time", c.start_time);
  get("step", c.step);
  get("center_lat", c.center_lat);
  get("center_lon", c.center_lon);
  return c;
}

SynthData generate(const SynthConfig& cfg) {
  validate(cfg);
  const std::size_t K = cfg.latent_dim;
  const std::size_t T = cfg.n_steps;
  const std::size_t lag = cfg.lead_coupling_steps;
  const std::size_t S = cfg.n_ztd_stations;

  SynthData out;
  out.latent_dim = K;
  {
    Rng rng(derive_seed(cfg.seed, kStations));
    out.ztd_stations = jittered_grid(S, cfg.center_lat, cfg.center_lon, 0.04, "Z", rng);
    out.wind_stations = jittered_grid(cfg.n_wind_stations, cfg.center_lat, cfg.center_lon, 0.1, "W", rng);
  }

  // Latent history covers `lag` steps before the first output time.
  const std::size_t TT = T + lag;
  std::vector<double> z(TT * K);
  {
    Rng rng(derive_seed(cfg.seed, kLatent));
    const double innov = std::sqrt(1.0 - kArPhi * kArPhi);
    for (std::size_t k = 0; k < K; ++k) {
      const double period = kPeriodsSec[k % 2];
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double ar = rng.normal();
      for (std::size_t t = 0; t < TT; ++t) {
        if (t > 0) ar = kArPhi * ar + innov * rng.normal();
        const double secs = static_cast<double>(t) * static_cast<double>(cfg.step);
        z[t * K + k] = ar + kSinAmplitude * std::sin(2.0 * std::numbers::pi * secs / period + phase);
      }
    }
  }
  out.latent.assign(z.begin() + static_cast<std::ptrdiff_t>(lag * K), z.end());

  // Spatial loadings: Gaussian bumps around random mode centres plus a weak
  // random global component.
  std::vector<double> weights(S * K);
  std::vector<double> wnorm(S, 0.0);
  {
    Rng rng(derive_seed(cfg.seed, kWeights));
    const auto side = std::ceil(std::sqrt(static_cast<double>(S)));
    const double half_width_km = std::max(1.0, 0.5 * side * 0.04 * 111.0);
    const double rho = 0.6 * half_width_km;
    for (std::size_t k = 0; k < K; ++k) {
      const double clat = cfg.center_lat + rng.uniform(-1.0, 1.0) * half_width_km / 111.0;
      const double clon = cfg.center_lon + rng.uniform(-1.0, 1.0) * half_width_km / 111.0;
      for (std::size_t s = 0; s < S; ++s) {
        const auto& st = out.ztd_stations[s];
        const double d = haversine_km(st.lat, st.lon, clat, clon);
        weights[s * K + k] = std::exp(-0.5 * d * d / (rho * rho)) + 0.1 * rng.normal();
      }
    }
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < K; ++k) wnorm[s] += weights[s * K + k] * weights[s * K + k];
      wnorm[s] = std::sqrt(wnorm[s]);
    }
  }

  const TimeAxis axis{cfg.start_time, cfg.step, T};
  out.ztd = ZtdPanel::empty_like(axis, out.ztd_stations);
  {
    Rng noise(derive_seed(cfg.seed, kZtdNoise));
    Rng mask(derive_seed(cfg.seed, kMask));
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t s = 0; s < S; ++s) {
        double sig = 0.0;
        for (std::size_t k = 0; k < K; ++k) sig += weights[s * K + k] * out.latent[t * K + k];
        const double e = noise.normal();
        const double v = 2.4 + 0.02 * (sig + cfg.noise_std * wnorm[s] * e);
        if (mask.uniform() < cfg.missing_rate) continue;
        out.ztd.at(t, s) = v;
        out.ztd.mask[out.ztd.index(t, s)] = 1;
      }
  }

  const LevelSpec levels = synth_levels(cfg.n_levels);
  out.wind = WindCube::empty_like(axis, levels, out.wind_stations);
  {
    Rng mix(derive_seed(cfg.seed, kWindMix));
    Rng noise(derive_seed(cfg.seed, kWindNoise));
    const std::size_t frame = out.wind.frame_size();
    std::vector<double> mean(frame), gain(frame), bias(frame), a(frame * K);
    for (std::size_t l = 0; l < cfg.n_levels; ++l)
      for (std::size_t s = 0; s < cfg.n_wind_stations; ++s)
        for (std::size_t c = 0; c < kComponents; ++c) {
          const std::size_t j = (l * cfg.n_wind_stations + s) * kComponents + c;
          const double lf = static_cast<double>(l);
          if (c == 0) {
            mean[j] = 3.0 + 2.0 * lf + 0.5 * mix.normal();
            gain[j] = mix.uniform(3.0, 6.0);
          } else if (c == 1) {
            mean[j] = 1.0 + 0.5 * lf + 0.5 * mix.normal();
            gain[j] = mix.uniform(3.0, 6.0);
          } else {
            mean[j] = 0.05 * mix.normal();
            gain[j] = mix.uniform(0.2, 0.5);
          }
          bias[j] = mix.uniform(-0.5, 0.5);
          for (std::size_t k = 0; k < K; ++k) a[j * K + k] = mix.normal() / std::sqrt(static_cast<double>(K));
        }
    const double nl = cfg.nonlinearity;
    for (std::size_t t = 0; t < T; ++t) {
      const double* zt = &z[t * K];  // z at (output time t) - lag
      for (std::size_t j = 0; j < frame; ++j) {
        double arg = bias[j];
        for (std::size_t k = 0; k < K; ++k) arg += a[j * K + k] * zt[k];
        const double f = nl > 0.0 ? std::tanh(nl * arg) / nl : arg;
        out.wind.values[t * frame + j] = mean[j] + gain[j] * (f + cfg.noise_std * noise.normal());
        out.wind.mask[t * frame + j] = 1;
      }
    }
  }
  return out;
}

LinearFitResult oracle_linear_fit(const SampleSet& set, double lead_min) {
  const auto train = set.indices(Split::Train);
  const auto test = set.indices(Split::Test);
  if (train.empty()) throw Error(Errc::EmptySplit, "train split is empty");
  if (test.empty()) throw Error(Errc::SplitEmpty, "test split is empty");
  if (!set.normalized()) throw Error(Errc::UnnormalizedInput, "sample set carries no normalization statistics");
  const std::size_t p = set.input_stride();
  const std::size_t o = set.output_dim();
  const std::size_t S = set.n_features();
  const auto& is = *set.input_stats;

  auto design = [&](std::span<const std::size_t> idx) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(p + 1));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      x(static_cast<Eigen::Index>(r), 0) = 1.0;
      for (std::size_t j = 0; j < p; ++j) {
        const std::size_t s = j % S;
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j + 1)) =
            (set.inputs[idx[r] * p + j] - is.mean[s]) / is.std[s];
      }
    }
    return x;
  };
  const Eigen::MatrixXd xtr = design(train);
  Eigen::MatrixXd ytr(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(o));
  for (std::size_t r = 0; r < train.size(); ++r)
    for (std::size_t j = 0; j < o; ++j)
      ytr(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = set.targets[train[r] * o + j];

  const double n = static_cast<double>(train.size());
  Eigen::MatrixXd gram = (xtr.transpose() * xtr) / n;
  const Eigen::MatrixXd rhs = (xtr.transpose() * ytr) / n;
  LinearFitResult res;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-10 * ev.maxCoeff())) {
    std::cerr << "warning: SingularDesign: rank-deficient normal equations, applying ridge 1e-8\n";
    res.ridge_applied = true;
    for (Eigen::Index i = 1; i < gram.rows(); ++i) gram(i, i) += 1e-8;
  }
  const Eigen::MatrixXd beta = gram.ldlt().solve(rhs);

  const Eigen::MatrixXd yhat = design(test) * beta;
  nn::Tensor rows(nn::Shape{test.size(), o});
  nn::Tensor truth(nn::Shape{test.size(), o});
  for (std::size_t r = 0; r < test.size(); ++r)
    for (std::size_t j = 0; j < o; ++j) {
      rows[r * o + j] = yhat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
      truth[r * o + j] = set.targets[test[r] * o + j];
    }
  res.prediction = rows_to_cube(set, test, rows);
  res.truth = rows_to_cube(set, test, truth);
  res.report = evaluate_cubes(res.prediction, res.truth, lead_min);
  return res;
}

LinearFitResult oracle_linear_fit(const ZtdPanel& ztd, const WindCube& wind, std::size_t window_steps,
                                  std::size_t lead_steps, const SplitConfig& split) {
  const SampleSet set = build_samples(ztd, wind, window_steps, lead_steps, split);
  return oracle_linear_fit(set, static_cast<double>(lead_steps * static_cast<std::size_t>(set.step)) / 60.0);
}

}  // namespace gwc
