#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "gwindcast/error.hpp"
#include "gwindcast/preprocess.hpp"
#include "testing.hpp"

using namespace gwc;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ZtdPanel series_panel(const std::vector<std::vector<double>>& per_station) {
  const std::size_t T = per_station.front().size();
  ZtdPanel p = ZtdPanel::empty_like({0, 300, T}, testing::grid_stations(per_station.size()));
  for (std::size_t s = 0; s < per_station.size(); ++s)
    for (std::size_t t = 0; t < T; ++t) {
      p.at(t, s) = per_station[s][t];
      p.mask[p.index(t, s)] = std::isnan(per_station[s][t]) ? 0 : 1;
    }
  return p;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidConfig;
}

}  // namespace

// ---------------------------------------------------------------- fill_gaps

TEST_CASE("fill_gaps interior gap is the linear midpoint") {
  const ZtdPanel f = fill_gaps(series_panel({{1, kNaN, 3}}));
  CHECK(f.at(1, 0) == 2.0);
  CHECK(std::all_of(f.mask.begin(), f.mask.end(), [](auto m) { return m == 1; }));
}

TEST_CASE("fill_gaps edge gap takes the nearest observation") {
  const ZtdPanel f = fill_gaps(series_panel({{kNaN, 2, 3}}));
  CHECK(f.values == std::vector<double>{2, 2, 3});
  const ZtdPanel g = fill_gaps(series_panel({{1, 2, kNaN, kNaN}}));
  CHECK(g.values == std::vector<double>{1, 2, 2, 2});
}

TEST_CASE("fill_gaps fills an empty station from its neighbours") {
  GapFillReport report;
  const ZtdPanel f = fill_gaps(series_panel({{kNaN, kNaN}, {5, 5}, {5, 5}, {5, 5}, {5, 5}, {5, 5}}), &report);
  CHECK(f.at(0, 0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(f.at(1, 0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(report.spatially_filled_stations == std::vector<std::size_t>{0});
  CHECK(report.filled_per_station[0] == 2);
  CHECK(report.filled_per_station[1] == 0);
}

TEST_CASE("fill_gaps with nothing observed") {
  CHECK(code_of([] { fill_gaps(series_panel({{kNaN, kNaN}, {kNaN, kNaN}})); }) == Errc::AllMissing);
}

TEST_CASE("fill_gaps keeps observed entries and is idempotent (property)") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = testing::random_dim(rng, 2, 30), S = testing::random_dim(rng, 1, 8);
    ZtdPanel p = testing::make_panel(T, S, [&](std::size_t, std::size_t) { return rng.normal(2.4, 0.1); });
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      if (rng.uniform() < 0.3) {
        p.values[i] = kNaN;
        p.mask[i] = 0;
      }
    }
    p.at(0, 0) = 2.4;
    p.mask[0] = 1;
    const ZtdPanel f = fill_gaps(p);
    for (std::size_t i = 0; i < p.values.size(); ++i) {
      if (p.mask[i]) CHECK(f.values[i] == p.values[i]);
      CHECK(std::isfinite(f.values[i]));
    }
    const ZtdPanel g = fill_gaps(f);
    CHECK(g.values == f.values);
  }
}

// ---------------------------------------------------------------- resample_time

TEST_CASE("resample_time hand-interpolated value") {
  WindCube c = testing::make_cube(3, {850.0}, 1, [](std::size_t t, auto...) { return 6.0 * double(t); }, 0, 360);
  const WindCube r = resample_time(c, 300);
  CHECK(r.axis == TimeAxis{0, 300, 3});
  CHECK(r.at(1, 0, 0, 0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(r.at(2, 0, 0, 2) == doctest::Approx(10.0).epsilon(1e-15));
}

TEST_CASE("resample_time at the source step is the identity") {
  Rng rng(3);
  const WindCube c = testing::make_cube(7, {1000, 850}, 2, [&](auto...) { return rng.normal(); });
  const WindCube r = resample_time(c, 300);
  CHECK(r.axis == c.axis);
  CHECK(r.values == c.values);
  CHECK(r.mask == c.mask);
}

TEST_CASE("resample_time without a target instant in the span") {
  const WindCube c = testing::make_cube(1, {850.0}, 1, [](auto...) { return 1.0; }, 100, 300);
  CHECK(code_of([&] { resample_time(c, 300); }) == Errc::EmptyOverlap);
  const WindCube d = testing::make_cube(1, {850.0}, 1, [](auto...) { return 1.0; }, 600, 300);
  CHECK(resample_time(d, 300).axis.count == 1);
}

TEST_CASE("resample_time masks targets next to missing samples") {
  WindCube c = testing::make_cube(3, {850.0}, 1, [](std::size_t t, auto...) { return double(t); }, 0, 360);
  c.mask[c.index(1, 0, 0, 0)] = 0;
  c.at(1, 0, 0, 0) = kNaN;
  const WindCube r = resample_time(c, 300);
  CHECK_FALSE(r.observed(1, 0, 0, 0));
  CHECK(r.observed(1, 0, 0, 1));
}

// ---------------------------------------------------------------- pressure

TEST_CASE("height_to_pressure reference values") {
  CHECK(height_to_pressure(0.0) == 1013.25);
  CHECK(height_to_pressure(8000.0) == doctest::Approx(1013.25 / std::numbers::e).epsilon(1e-15));
  CHECK(std::abs(height_to_pressure(7160.0) - 1013.25 * std::exp(-0.895)) < 1e-12);
  CHECK(height_to_pressure(1000.0, {500.0, 1000.0}) == doctest::Approx(500.0 / std::numbers::e));
}

TEST_CASE("height_to_pressure is strictly decreasing (property)") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double a = rng.uniform(-500, 20000), b = rng.uniform(-500, 20000);
    if (a == b) continue;
    CHECK((a < b) == (height_to_pressure(a) > height_to_pressure(b)));
  }
}

TEST_CASE("interpolate_to_pressure_levels in log-pressure") {
  const double h1000 = -8000.0 * std::log(1000.0 / 1013.25);
  const double h900 = -8000.0 * std::log(900.0 / 1013.25);
  WindCube c = testing::make_cube(1, {0.0}, 1, [](auto...) { return 0.0; });
  c.levels = {LevelKind::HeightM, {h1000, h900}};
  c.values.assign(2 * 3, 0.0);
  c.mask.assign(2 * 3, 1);
  c.at(0, 1, 0, 0) = 10.0;
  c.at(0, 0, 0, 1) = 3.0;
  c.at(0, 1, 0, 1) = 7.0;

  const WindCube mid = interpolate_to_pressure_levels(c, {LevelKind::PressureHPa, {std::sqrt(1000.0 * 900.0)}});
  CHECK(mid.at(0, 0, 0, 0) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(mid.at(0, 0, 0, 1) == doctest::Approx(5.0).epsilon(1e-12));

  const WindCube node = interpolate_to_pressure_levels(c, {LevelKind::PressureHPa, {900.0}});
  CHECK(node.at(0, 0, 0, 0) == doctest::Approx(10.0).epsilon(1e-12));

  const WindCube clamp = interpolate_to_pressure_levels(c, {LevelKind::PressureHPa, {2000.0, 100.0}});
  CHECK(clamp.at(0, 0, 0, 0) == 0.0);
  CHECK(clamp.at(0, 0, 0, 1) == 3.0);
  CHECK(clamp.at(0, 1, 0, 0) == 10.0);
}

// ---------------------------------------------------------------- wind

TEST_CASE("decompose_wind exact points") {
  auto uv = decompose_wind(10, 0);
  CHECK(uv.u == doctest::Approx(0.0));
  CHECK(uv.v == doctest::Approx(-10.0));
  uv = decompose_wind(5, 90);
  CHECK(uv.u == doctest::Approx(-5.0));
  CHECK(std::abs(uv.v) < 1e-12);
  uv = decompose_wind(8, 225);
  CHECK(uv.u == doctest::Approx(8.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(uv.v == doctest::Approx(8.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(code_of([] { decompose_wind(-1, 0); }) == Errc::NegativeSpeed);
}

TEST_CASE("compose_wind exact points") {
  auto sd = compose_wind(0, -10);
  CHECK(sd.speed == 10.0);
  CHECK(sd.direction_deg == 0.0);
  sd = compose_wind(5.657, 5.657);
  CHECK(sd.speed == doctest::Approx(8.0).epsilon(1e-3));
  CHECK(sd.direction_deg == doctest::Approx(225.0).epsilon(1e-12));
  sd = compose_wind(0, 0);
  CHECK(sd.speed == 0.0);
  CHECK(sd.direction_deg == 0.0);
  CHECK_FALSE(std::signbit(compose_wind(0.0, -1.0).direction_deg));
}

TEST_CASE("wind decomposition round trip (property)") {
  Rng rng(33);
  for (int i = 0; i < 1000; ++i) {
    const double V = rng.uniform(1e-3, 60.0), theta = rng.uniform(0.0, 360.0);
    const auto uv = decompose_wind(V, theta);
    CHECK(std::abs(uv.u * uv.u + uv.v * uv.v - V * V) <= 1e-12 * V * V);
    const auto sd = compose_wind(uv.u, uv.v);
    CHECK(std::abs(sd.speed - V) < 1e-9);
    double d = std::abs(sd.direction_deg - theta);
    d = std::min(d, 360.0 - d);
    CHECK(d < 1e-9);
    CHECK(sd.direction_deg >= 0.0);
    CHECK(sd.direction_deg < 360.0);
  }
  const auto wrapped = compose_wind(decompose_wind(3, 405).u, decompose_wind(3, 405).v);
  CHECK(wrapped.direction_deg == doctest::Approx(45.0).epsilon(1e-12));
}

// ---------------------------------------------------------------- stations

TEST_CASE("haversine one degree of latitude") {
  CHECK(haversine_km(0, 0, 1, 0) == doctest::Approx(6371.0 * std::numbers::pi / 180.0).epsilon(1e-12));
  CHECK(std::abs(haversine_km(0, 0, 1, 0) - 111.19) < 0.01);
  CHECK(haversine_km(29.36, 120.07, 29.36, 120.07) == 0.0);
}

TEST_CASE("select_nearest_stations examples") {
  const StationTable t{{{"C", 1.0, 0.0}, {"A", 0.0, 0.0}, {"B", 0.5, 0.0}}};
  const StationTable two = select_nearest_stations(t, 0.0, 0.0, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].id == "A");
  CHECK(two[1].id == "B");
  CHECK(select_nearest_stations(t, 1.0, 0.0, 1)[0].id == "C");
  CHECK(select_nearest_stations(t, 0.0, 0.0, 3).size() == 3);
  CHECK(code_of([&] { select_nearest_stations(t, 0.0, 0.0, 4); }) == Errc::KTooLarge);
  CHECK(code_of([&] { select_nearest_stations(t, 0.0, 0.0, 0); }) == Errc::KTooLarge);
  const StationTable ordered = restore_table_order(t, two);
  CHECK(ordered[0].id == "A");
  CHECK(ordered[1].id == "B");
  CHECK(restore_table_order(t, select_nearest_stations(t, 0, 0, 3)) == t);
}

TEST_CASE("ties break by station id") {
  const StationTable t{{{"Z", 0.0, 1.0}, {"M", 0.0, -1.0}, {"A", 1.5, 0.0}}};
  const StationTable s = select_nearest_stations(t, 0.0, 0.0, 2);
  CHECK(s[0].id == "M");
  CHECK(s[1].id == "Z");
}

TEST_CASE("nearest selections are nested (property)") {
  Rng rng(57);
  for (int trial = 0; trial < 100; ++trial) {
    StationTable t;
    const std::size_t n = testing::random_dim(rng, 1, 30);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse coordinates force distance ties.
      t.entries.push_back({"S" + std::to_string(rng.below(1000000)) + "_" + std::to_string(i),
                           29.0 + 0.1 * double(rng.below(5)), 120.0 + 0.1 * double(rng.below(5))});
    }
    const std::size_t k1 = testing::random_dim(rng, 1, n), k2 = testing::random_dim(rng, k1, n);
    const StationTable a = select_nearest_stations(t, 29.2, 120.2, k1);
    const StationTable b = select_nearest_stations(t, 29.2, 120.2, k2);
    for (std::size_t i = 0; i < k1; ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("station subsetting of panels and cubes") {
  const ZtdPanel p = testing::make_panel(4, 5, [](std::size_t t, std::size_t s) { return double(10 * t + s); });
  StationTable sub{{p.stations[3], p.stations[1]}};
  const ZtdPanel q = select_panel_stations(p, sub);
  CHECK(q.at(2, 0) == 23.0);
  CHECK(q.at(2, 1) == 21.0);
  CHECK(select_panel_stations(p, p.stations).values == p.values);
  sub.entries.push_back({"nope", 0, 0});
  CHECK(code_of([&] { select_panel_stations(p, sub); }) == Errc::Misaligned);
  const WindCube c = testing::make_cube(2, {850}, 3, [](std::size_t t, std::size_t, std::size_t s, std::size_t k) {
    return double(100 * t + 10 * s + k);
  });
  const WindCube d = select_cube_stations(c, StationTable{{c.stations[2]}});
  CHECK(d.at(1, 0, 0, 1) == 121.0);
}

// ---------------------------------------------------------------- build_samples

TEST_CASE("build_samples counts and alignment") {
  const ZtdPanel z = testing::make_panel(20, 3, [](std::size_t t, std::size_t s) { return double(t) + 0.1 * double(s); });
  const WindCube w = testing::make_cube(20, {1000, 850}, 2, [](std::size_t t, std::size_t l, std::size_t s, std::size_t c) {
    return double(t) + 0.01 * double(l * 100 + s * 10 + c);
  });
  const SampleSet set = build_samples(z, w, 6, 1, {});
  REQUIRE(set.size() == 14);
  CHECK(set.output_dim() == 2 * 2 * 3);
  CHECK(set.input_stride() == 18);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::int64_t last_input = set.input_end_time(i);
    CHECK(set.target_times[i] == last_input + 300);
    // Last input row equals ZTD at the last input time; target equals wind at target time.
    const std::size_t k = *z.axis.index_of(last_input);
    CHECK(set.inputs[i * 18 + 5 * 3 + 2] == z.at(k, 2));
    CHECK(set.inputs[i * 18 + 0] == z.at(k - 5, 0));
    CHECK(set.targets[i * 12 + 7] == w.values[(k + 1) * w.frame_size() + 7]);
  }
}

TEST_CASE("build_samples splits") {
  const ZtdPanel z = testing::make_panel(200, 2, [](std::size_t t, std::size_t s) { return std::sin(0.1 * double(t + s)); });
  const WindCube w = testing::make_cube(200, {850}, 1, [](std::size_t t, auto...) { return std::cos(0.1 * double(t)); });

  SplitConfig all_train{{1.0, 0.0, 0.0}, 5};
  const SampleSet a = build_samples(z, w, 4, 2, all_train);
  CHECK(a.indices(Split::Train).size() == a.size());

  SplitConfig cfg{{0.7, 0.15, 0.15}, 42};
  const SampleSet b1 = build_samples(z, w, 4, 2, cfg);
  const SampleSet b2 = build_samples(z, w, 4, 2, cfg);
  CHECK(b1.split_labels == b2.split_labels);
  cfg.seed = 43;
  CHECK(build_samples(z, w, 4, 2, cfg).split_labels != b1.split_labels);

  SUBCASE("normalization statistics come from the train split only") {
    const auto train = b1.indices(Split::Train);
    double mean = 0.0;
    for (std::size_t i : train) mean += b1.targets[i * 3];
    mean /= double(train.size());
    CHECK(b1.target_stats->mean[0] == doctest::Approx(mean).epsilon(1e-14));
    double var = 0.0;
    for (std::size_t i : train) var += (b1.targets[i * 3] - mean) * (b1.targets[i * 3] - mean);
    CHECK(b1.target_stats->std[0] == doctest::Approx(std::sqrt(var / double(train.size()))).epsilon(1e-12));
  }
}

TEST_CASE("split proportions match the ratios within one sample (property)") {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t T = testing::random_dim(rng, 12, 300);
    const ZtdPanel z = testing::make_panel(T, 2, [&](std::size_t, std::size_t) { return rng.normal(); });
    const WindCube w = testing::make_cube(T, {850}, 1, [&](auto...) { return rng.normal(); });
    const double r0 = rng.uniform(0.2, 0.9), r1 = rng.uniform(0.0, 1.0 - r0);
    const SplitConfig cfg{{r0, r1, 1.0 - r0 - r1}, rng.next()};
    const std::size_t window = testing::random_dim(rng, 1, 5), lead = testing::random_dim(rng, 1, 5);
    const SampleSet s = build_samples(z, w, window, lead, cfg);
    CHECK(s.size() == T - window + 1 - lead);
    const double n = double(s.size());
    for (int sp = 0; sp < 3; ++sp) {
      const double got = double(s.indices(Split(sp)).size());
      CHECK(std::abs(got - cfg.ratios[sp] * n) <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("build_samples zero-variance channels normalize with std 1") {
  const ZtdPanel z = testing::make_panel(30, 2, [](std::size_t t, std::size_t s) { return s == 0 ? 2.4 : double(t); });
  const WindCube w = testing::make_cube(30, {850}, 1, [](auto...) { return 3.0; });
  const SampleSet s = build_samples(z, w, 3, 1, {});
  CHECK(s.input_stats->std[0] == 1.0);
  CHECK(s.target_stats->std[0] == 1.0);
  CHECK(s.target_stats->mean[0] == 3.0);
}

TEST_CASE("build_samples errors") {
  const ZtdPanel z = testing::make_panel(20, 2, [](std::size_t, std::size_t) { return 1.0; });
  const WindCube shifted = testing::make_cube(20, {850}, 1, [](auto...) { return 1.0; }, 1747872000 + 7, 300);
  CHECK(code_of([&] { build_samples(z, shifted, 3, 1, {}); }) == Errc::Misaligned);
  const WindCube later = testing::make_cube(5, {850}, 1, [](auto...) { return 1.0; }, 1747872000 + 300 * 100, 300);
  CHECK(code_of([&] { build_samples(z, later, 3, 1, {}); }) == Errc::NoSamples);
  const WindCube w = testing::make_cube(20, {850}, 1, [](auto...) { return 1.0; });
  CHECK(code_of([&] { build_samples(z, w, 3, 1, {{0.5, 0.6, 0.0}, 0}); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { build_samples(z, w, 0, 1, {}); }) == Errc::InvalidConfig);
  CHECK(code_of([&] { build_samples(z, w, 3, 0, {}); }) == Errc::InvalidConfig);
}

TEST_CASE("build_samples skips windows touching masked entries") {
  ZtdPanel z = testing::make_panel(20, 2, [](std::size_t t, std::size_t) { return double(t); });
  z.mask[z.index(10, 1)] = 0;
  const WindCube w = testing::make_cube(20, {850}, 1, [](auto...) { return 1.0; });
  const SampleSet s = build_samples(z, w, 3, 1, {});
  CHECK(s.size() == 17 - 3);
}
