#include <doctest.h>

#include <cmath>
#include <cstring>

#include "gwindcast/error.hpp"
#include "gwindcast/io.hpp"
#include "gwindcast/preprocess.hpp"
#include "gwindcast/synthgen.hpp"
#include "testing.hpp"

using namespace gwc;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_ztd_stations = 10;
  c.n_wind_stations = 2;
  c.n_levels = 2;
  c.n_steps = 1200;
  c.latent_dim = 4;
  return c;
}

double pooled_r(const MetricReport& r, std::size_t component) {
  for (const auto& p : r.pooled)
    if (p.component == component) return *p.values.r;
  return NAN;
}

}  // namespace

TEST_CASE("generation is deterministic") {
  const SynthConfig c = small_config();
  const SynthData a = generate(c), b = generate(c);
  CHECK(io::encode_panel(a.ztd) == io::encode_panel(b.ztd));
  CHECK(io::encode_cube(a.wind) == io::encode_cube(b.wind));
  CHECK(std::memcmp(a.latent.data(), b.latent.data(), a.latent.size() * sizeof(double)) == 0);
  SynthConfig d = c;
  d.seed += 1;
  CHECK(io::encode_panel(generate(d).ztd) != io::encode_panel(a.ztd));
}

TEST_CASE("generated data satisfies the core invariants") {
  const SynthData d = generate(small_config());
  CHECK(validate(d.ztd_stations).empty());
  CHECK(validate(d.wind_stations).empty());
  CHECK(validate(d.ztd).empty());
  CHECK(validate(d.wind).empty());
  CHECK(d.latent.size() == 1200 * 4);
  for (double x : d.latent) CHECK(std::isfinite(x));
  for (double x : d.wind.values) CHECK(std::isfinite(x));
  for (std::size_t i = 0; i < d.ztd.values.size(); ++i) {
    if (d.ztd.mask[i]) CHECK(std::isfinite(d.ztd.values[i]));
  }
  CHECK(d.ztd.axis.start == io::parse_iso8601("2025-05-22T00:00:00Z"));
  CHECK(d.wind.levels.kind == LevelKind::PressureHPa);
  CHECK(d.wind.levels.values == std::vector<double>{1000, 925});
  for (const auto& s : d.ztd_stations.entries) {
    CHECK(haversine_km(s.lat, s.lon, 29.36, 120.07) < 50.0);
  }
}

TEST_CASE("missing rate is binomial") {
  SynthConfig c = small_config();
  c.n_steps = 1000;  // 10 stations x 1000 epochs = 1e4 entries
  const SynthData d = generate(c);
  std::size_t masked = 0;
  for (auto m : d.ztd.mask) masked += m == 0;
  const double sigma = std::sqrt(1e4 * 0.02 * 0.98);
  CHECK(std::abs(double(masked) - 200.0) <= 3.0 * sigma);
}

TEST_CASE("config validation") {
  SynthConfig c = small_config();
  c.n_levels = 0;
  CHECK_THROWS_AS(generate(c), Error);
  c = small_config();
  c.noise_std = 1.0;
  CHECK_THROWS_AS(generate(c), Error);
  c = small_config();
  c.missing_rate = -0.1;
  CHECK_THROWS_AS(generate(c), Error);
  c = small_config();
  CHECK(synth_config_from_json(to_json(c)).n_steps == c.n_steps);
}

TEST_CASE("noise-free data is learnable by the least-squares probe") {
  SynthConfig c;
  c.noise_std = 0.0;
  c.missing_rate = 0.0;
  const SynthData d = generate(c);
  const auto fit = oracle_linear_fit(d.ztd, d.wind, 6, 1, {});
  for (std::size_t k = 0; k < kComponents; ++k) CHECK(pooled_r(fit.report, k) > 0.99);
}

TEST_CASE("noiseless linear data is recovered exactly") {
  SynthConfig c = small_config();
  c.noise_std = 0.0;
  c.missing_rate = 0.0;
  c.nonlinearity = 0.0;
  const SynthData d = generate(c);
  for (std::size_t lead : {1u, 3u, 6u}) {
    const auto fit = oracle_linear_fit(d.ztd, d.wind, 6, lead, {});
    CHECK(fit.ridge_applied);  // ZTD spans only the latent subspace
    for (const auto& p : fit.report.pooled) CHECK(p.values.rmse < 1e-6);
  }
}

TEST_CASE("pure-noise targets give no skill") {
  SynthConfig c = small_config();
  c.n_steps = 4000;
  const SynthData d = generate(c);
  Rng rng(99);
  WindCube noise = d.wind;
  for (auto& v : noise.values) v = rng.normal();
  const auto fit = oracle_linear_fit(fill_gaps(d.ztd), noise, 6, 1, {});
  CHECK(fit.truth.axis.count >= 2000);
  for (std::size_t k = 0; k < kComponents; ++k) CHECK(std::abs(pooled_r(fit.report, k)) < 0.1);
}

TEST_CASE("constant targets are fit by the intercept") {
  const SynthData d = generate(small_config());
  WindCube flat = d.wind;
  for (auto& v : flat.values) v = 4.25;
  const auto fit = oracle_linear_fit(fill_gaps(d.ztd), flat, 6, 2, {});
  for (const auto& p : fit.report.pooled) {
    CHECK(p.values.rmse < 1e-9);
    CHECK_FALSE(p.values.r.has_value());
  }
}

TEST_CASE("stronger nonlinearity lowers linear skill") {
  SynthConfig mild = small_config(), strong = small_config();
  strong.nonlinearity = 3.0;
  const auto a = oracle_linear_fit(fill_gaps(generate(mild).ztd), generate(mild).wind, 6, 1, {});
  const auto b = oracle_linear_fit(fill_gaps(generate(strong).ztd), generate(strong).wind, 6, 1, {});
  CHECK(pooled_r(b.report, 0) < pooled_r(a.report, 0));
}
