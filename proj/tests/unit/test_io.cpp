#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "gwindcast/error.hpp"
#include "gwindcast/io.hpp"
#include "gwindcast/preprocess.hpp"
#include "testing.hpp"

using namespace gwc;
namespace fs = std::filesystem;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ZtdPanel random_panel(Rng& rng) {
  const std::size_t T = testing::random_dim(rng, 1, 40), S = testing::random_dim(rng, 1, 9);
  ZtdPanel p = testing::make_panel(T, S, [&](std::size_t, std::size_t) { return rng.normal(2.4, 0.3); },
                                   static_cast<std::int64_t>(rng.below(1u << 30)), 60 * (1 + rng.below(10)));
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (rng.uniform() < 0.2) {
      p.values[i] = std::numeric_limits<double>::quiet_NaN();
      p.mask[i] = 0;
    }
  }
  return p;
}

WindCube random_cube(Rng& rng) {
  std::vector<double> levels;
  double p = 1000.0;
  for (std::size_t l = testing::random_dim(rng, 1, 4); l > 0; --l) levels.push_back(p -= rng.uniform(10, 100));
  WindCube c = testing::make_cube(testing::random_dim(rng, 1, 20), levels, testing::random_dim(rng, 1, 4),
                                  [&](auto...) { return rng.normal(0.0, 5.0); });
  for (std::size_t i = 0; i < c.values.size(); ++i) {
    if (rng.uniform() < 0.1) {
      c.values[i] = std::numeric_limits<double>::quiet_NaN();
      c.mask[i] = 0;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("ISO-8601 timestamps") {
  CHECK(io::format_iso8601(1747872000) == "2025-05-22T00:00:00Z");
  CHECK(io::parse_iso8601("2025-05-22T00:00:00Z") == 1747872000);
  CHECK(io::format_iso8601(0) == "1970-01-01T00:00:00Z");
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto t = static_cast<std::int64_t>(rng.below(4'000'000'000ULL));
    CHECK(io::parse_iso8601(io::format_iso8601(t)) == t);
  }
  CHECK_THROWS_AS(io::parse_iso8601("yesterday"), Error);
}

TEST_CASE("number formatting") {
  CHECK(io::fmt9(1.0 / 3.0) == "0.333333333");
  CHECK(io::fmt9(std::numeric_limits<double>::quiet_NaN()) == "nan");
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double x = rng.normal(0.0, 1e3);
    CHECK(std::stod(io::fmt17(x)) == x);
  }
}

TEST_CASE("FNV-1a reference digests") {
  CHECK(io::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(io::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(io::fnv1a("foobar") == 0x85944171f73967e8ULL);
  CHECK(io::hex_digest(0xaf63dc4c8601ec8cULL) == "af63dc4c8601ec8c");
}

TEST_CASE("station CSV round trip") {
  const StationTable t = testing::grid_stations(7);
  CHECK(io::parse_stations_csv(io::stations_to_csv(t)) == t);
  CHECK_THROWS_AS(io::parse_stations_csv("id,lat,lon\nA,1,2\n"), Error);
  CHECK_THROWS_AS(io::parse_stations_csv("station_id,lat,lon\nA,95,2\n"), Error);
}

TEST_CASE("ZTD CSV with absent rows") {
  const StationTable st = testing::grid_stations(2);
  const std::string text =
      "timestamp,station_id,ztd_m\n"
      "2025-05-22T00:00:00Z,S000,2.40\n"
      "2025-05-22T00:00:00Z,S001,2.41\n"
      "2025-05-22T00:10:00Z,S000,2.42\n";
  const ZtdPanel p = io::parse_ztd_csv(text, st);
  CHECK(p.n_time() == 3);
  CHECK(p.observed(0, 1));
  CHECK_FALSE(p.observed(1, 0));
  CHECK_FALSE(p.observed(2, 1));
  CHECK(p.at(2, 0) == 2.42);
  const ZtdPanel again = io::parse_ztd_csv(io::ztd_to_csv(p), st);
  CHECK(again.mask == p.mask);
  CHECK_THROWS_AS(io::parse_ztd_csv("timestamp,station_id,ztd_m\n2025-05-22T00:00:00Z,NOPE,1\n", st), Error);
  CHECK_THROWS_AS(io::parse_ztd_csv("timestamp,station_id,ztd_m\n2025-05-22T00:00:00Z,S000,2.4\n"
                                    "2025-05-22T00:01:00Z,S000,2.4\n",
                                    st),
                  Error);
}

TEST_CASE("wind CSV decomposes speed and direction") {
  const StationTable st = testing::grid_stations(1, "W");
  const std::string text =
      "# level_kind=height_m\n"
      "timestamp,station_id,level,wind_speed_ms,wind_dir_deg,w_ms\n"
      "2025-05-22T00:00:00Z,W000,110,10,0,0.1\n"
      "2025-05-22T00:00:00Z,W000,760,5,90,0.2\n"
      "2025-05-22T00:05:00Z,W000,110,8,225,0.3\n";
  const auto obs = io::parse_wind_csv(text);
  CHECK(obs.kind == LevelKind::HeightM);
  const WindCube c = io::wind_cube_from_records(obs, st, 300);
  CHECK(c.levels.values == std::vector<double>{110, 760});
  CHECK(c.at(0, 0, 0, 0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(c.at(0, 0, 0, 1) == doctest::Approx(-10.0));
  CHECK(c.at(0, 1, 0, 0) == doctest::Approx(-5.0));
  CHECK(c.at(1, 0, 0, 0) == doctest::Approx(5.656854249).epsilon(1e-9));
  CHECK(c.at(1, 0, 0, 2) == 0.3);
  CHECK_FALSE(c.observed(1, 1, 0, 0));
  const auto negative = io::parse_wind_csv("timestamp,station_id,level,wind_speed_ms,wind_dir_deg,w_ms\n"
                                           "2025-05-22T00:00:00Z,W000,110,-1,0,0\n");
  CHECK_THROWS_AS(io::wind_cube_from_records(negative, st, 300), Error);
}

TEST_CASE("wind CSV round trip through the writer") {
  Rng rng(9);
  const WindCube c = testing::make_cube(4, {1000, 850}, 2, [&](auto...) { return rng.normal(0, 5); });
  const WindCube back = io::wind_cube_from_records(io::parse_wind_csv(io::wind_to_csv(c)), c.stations, 300);
  REQUIRE(back.values.size() == c.values.size());
  for (std::size_t i = 0; i < c.values.size(); ++i) CHECK(back.values[i] == doctest::Approx(c.values[i]).epsilon(1e-9));
}

TEST_CASE("binary panel and cube round trip bit-exactly (property)") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const ZtdPanel p = random_panel(rng);
    const ZtdPanel pb = io::decode_panel(io::encode_panel(p));
    CHECK(pb.axis == p.axis);
    CHECK(pb.stations == p.stations);
    CHECK(pb.mask == p.mask);
    CHECK(bit_equal(pb.values, p.values));

    const WindCube c = random_cube(rng);
    const WindCube cb = io::decode_cube(io::encode_cube(c));
    CHECK(cb.axis == c.axis);
    CHECK(cb.levels == c.levels);
    CHECK(cb.stations == c.stations);
    CHECK(cb.mask == c.mask);
    CHECK(bit_equal(cb.values, c.values));
    CHECK(io::encode_cube(cb) == io::encode_cube(c));
  }
}

TEST_CASE("binary files on disk") {
  const fs::path dir = fs::temp_directory_path() / "gwc_test_io";
  fs::create_directories(dir);
  Rng rng(4);
  const ZtdPanel p = random_panel(rng);
  io::write_panel(dir / "p.bin", p);
  CHECK(io::encode_panel(io::read_panel(dir / "p.bin")) == io::encode_panel(p));
  const WindCube c = random_cube(rng);
  io::write_cube(dir / "c.bin", c);
  CHECK(io::encode_cube(io::read_cube(dir / "c.bin")) == io::encode_cube(c));
  CHECK_THROWS_AS(io::read_cube(dir / "p.bin"), Error);
  CHECK_THROWS_AS(io::read_bytes(dir / "missing.bin"), Error);
  fs::remove_all(dir);
}

TEST_CASE("corrupt binaries are rejected") {
  Rng rng(8);
  io::Bytes b = io::encode_panel(random_panel(rng));
  io::Bytes truncated(b.begin(), b.end() - 1);
  CHECK_THROWS_AS(io::decode_panel(truncated), Error);
  b[0] = 'X';
  CHECK_THROWS_AS(io::decode_panel(b), Error);
}
