#include "gwindcast/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gwindcast/error.hpp"
#include "gwindcast/preprocess.hpp"

namespace gwc::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (tmp.empty() || end != tmp.c_str() + tmp.size()) {
    throw Error(Errc::ParseError, "bad number '" + tmp + "' for " + std::string(what));
  }
  return v;
}

template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    ++line_no;
    f(trim(line), line_no);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
}

void expect_header(std::string_view got, std::string_view want) {
  if (got != want) {
    throw Error(Errc::ParseError, "expected header '" + std::string(want) + "', got '" +
                                      std::string(got) + "'");
  }
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(const Bytes& b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw Error(Errc::ParseError, "truncated binary payload");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const Bytes& b_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kBinaryVersion = 1;

void write_header(Writer& w, const char (&magic)[5], const TimeAxis& axis, const StationTable& st) {
  w.bytes(magic, 4);
  w.u32(kBinaryVersion);
  w.i64(axis.start);
  w.i64(axis.step);
  w.u64(axis.count);
  w.u64(st.size());
  for (const auto& s : st.entries) {
    w.u32(static_cast<std::uint32_t>(s.id.size()));
    w.bytes(s.id.data(), s.id.size());
    w.f64(s.lat);
    w.f64(s.lon);
  }
}

void read_header(Reader& r, std::string_view magic, TimeAxis& axis, StationTable& st) {
  if (r.str(4) != magic) throw Error(Errc::ParseError, "bad magic, expected " + std::string(magic));
  if (r.u32() != kBinaryVersion) throw Error(Errc::ParseError, "unsupported binary version");
  axis.start = r.i64();
  axis.step = r.i64();
  axis.count = r.u64();
  const auto n = r.u64();
  st.entries.clear();
  for (std::uint64_t i = 0; i < n; ++i) {
    Station s;
    s.id = r.str(r.u32());
    s.lat = r.f64();
    s.lon = r.f64();
    st.entries.push_back(std::move(s));
  }
}

void payload(Writer& w, const std::vector<double>& values, const std::vector<std::uint8_t>& mask) {
  for (double v : values) w.f64(v);
  w.bytes(mask.data(), mask.size());
}

void read_payload(Reader& r, std::size_t n, std::vector<double>& values, std::vector<std::uint8_t>& mask) {
  r.need(n * 9);
  values.resize(n);
  for (auto& v : values) v = r.f64();
  mask.resize(n);
  for (auto& m : mask) m = r.u8();
  if (!r.done()) throw Error(Errc::ParseError, "trailing bytes after payload");
}

}  // namespace

std::string format_iso8601(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{epoch_seconds}};
  const auto day = floor<days>(tp);
  const year_month_day ymd{day};
  const hh_mm_ss hms{tp - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::int64_t parse_iso8601(std::string_view text) {
  text = trim(text);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char tail = 0;
  const std::string tmp(text);
  const int got = std::sscanf(tmp.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail);
  if (got < 6 || (got == 7 && tail != 'Z') || tmp.size() > 20) {
    throw Error(Errc::ParseError, "bad ISO-8601 UTC timestamp '" + tmp + "'");
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw Error(Errc::ParseError, "invalid date/time '" + tmp + "'");
  }
  const auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
  return tp.time_since_epoch().count();
}

std::string fmt9(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

std::string fmt17(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto c = line.find(',', pos);
    out.emplace_back(trim(line.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos)));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Bytes read_bytes(const std::filesystem::path& path) {
  const std::string s = read_text(path);
  return Bytes(s.begin(), s.end());
}

void write_bytes(const std::filesystem::path& path, const Bytes& bytes) {
  write_text(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t h) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a(std::string_view s) {
  return fnv1a(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

StationTable parse_stations_csv(std::string_view text) {
  StationTable table;
  bool header = true;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (line.empty() || line.front() == '#') return;
    if (header) {
      expect_header(line, "station_id,lat,lon");
      header = false;
      return;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw Error(Errc::ParseError, "station line " + std::to_string(no));
    table.entries.push_back({f[0], parse_double(f[1], "lat"), parse_double(f[2], "lon")});
  });
  throw_if_invalid(validate(table), "station table");
  return table;
}

std::string stations_to_csv(const StationTable& table) {
  std::string out = "station_id,lat,lon\n";
  for (const auto& s : table.entries) out += s.id + "," + fmt17(s.lat) + "," + fmt17(s.lon) + "\n";
  return out;
}

StationTable read_stations_csv(const std::filesystem::path& path) {
  return parse_stations_csv(read_text(path));
}

void write_stations_csv(const std::filesystem::path& path, const StationTable& table) {
  write_text(path, stations_to_csv(table));
}

ZtdPanel parse_ztd_csv(std::string_view text, const StationTable& stations, std::int64_t step) {
  struct Row {
    std::int64_t t;
    std::size_t s;
    double v;
  };
  std::vector<Row> rows;
  bool header = true;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (line.empty() || line.front() == '#') return;
    if (header) {
      expect_header(line, "timestamp,station_id,ztd_m");
      header = false;
      return;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw Error(Errc::ParseError, "ZTD line " + std::to_string(no));
    const auto s = stations.index_of(f[1]);
    if (!s) throw Error(Errc::ParseError, "unknown station '" + f[1] + "' on line " + std::to_string(no));
    rows.push_back({parse_iso8601(f[0]), *s, parse_double(f[2], "ztd_m")});
  });
  if (rows.empty()) throw Error(Errc::ParseError, "ZTD file has no rows");
  const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(),
                                            [](const Row& a, const Row& b) { return a.t < b.t; });
  TimeAxis axis{lo->t, step, static_cast<std::size_t>((hi->t - lo->t) / step + 1)};
  ZtdPanel panel = ZtdPanel::empty_like(axis, stations);
  for (const auto& r : rows) {
    const auto k = axis.index_of(r.t);
    if (!k) throw Error(Errc::ParseError, "timestamp " + format_iso8601(r.t) + " is off the time grid");
    panel.at(*k, r.s) = r.v;
    panel.mask[panel.index(*k, r.s)] = std::isfinite(r.v) ? 1 : 0;
  }
  return panel;
}

std::string ztd_to_csv(const ZtdPanel& panel) {
  std::string out = "timestamp,station_id,ztd_m\n";
  for (std::size_t t = 0; t < panel.n_time(); ++t) {
    const std::string ts = format_iso8601(panel.axis.time_at(t));
    for (std::size_t s = 0; s < panel.n_stations(); ++s) {
      if (!panel.observed(t, s)) continue;
      out += ts + "," + panel.stations[s].id + "," + fmt17(panel.at(t, s)) + "\n";
    }
  }
  return out;
}

WindObservations parse_wind_csv(std::string_view text) {
  WindObservations obs;
  bool header = true;
  for_each_line(text, [&](std::string_view line, std::size_t no) {
    if (line.empty()) return;
    if (line.front() == '#') {
      const auto eq = line.find("level_kind=");
      if (eq != std::string_view::npos) {
        const auto kind = level_kind_from_string(trim(line.substr(eq + 11)));
        if (!kind) throw Error(Errc::ParseError, "unknown level_kind on line " + std::to_string(no));
        obs.kind = *kind;
      }
      return;
    }
    if (header) {
      expect_header(line, "timestamp,station_id,level,wind_speed_ms,wind_dir_deg,w_ms");
      header = false;
      return;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw Error(Errc::ParseError, "wind line " + std::to_string(no));
    obs.records.push_back({parse_iso8601(f[0]), f[1], parse_double(f[2], "level"),
                           parse_double(f[3], "wind_speed_ms"), parse_double(f[4], "wind_dir_deg"),
                           parse_double(f[5], "w_ms")});
  });
  return obs;
}

WindCube wind_cube_from_records(const WindObservations& obs, const StationTable& stations,
                                std::int64_t step) {
  if (obs.records.empty()) throw Error(Errc::ParseError, "wind file has no rows");
  if (step <= 0) throw Error(Errc::InvalidConfig, "step must be positive");
  std::set<double> level_set;
  std::int64_t t0 = obs.records.front().time, t1 = t0;
  for (const auto& r : obs.records) {
    level_set.insert(r.level);
    t0 = std::min(t0, r.time);
    t1 = std::max(t1, r.time);
  }
  LevelSpec levels{obs.kind, {level_set.begin(), level_set.end()}};
  if (obs.kind == LevelKind::PressureHPa) std::reverse(levels.values.begin(), levels.values.end());
  TimeAxis axis{t0, step, static_cast<std::size_t>((t1 - t0) / step + 1)};
  WindCube cube = WindCube::empty_like(axis, levels, stations);
  for (const auto& r : obs.records) {
    const auto k = axis.index_of(r.time);
    if (!k) throw Error(Errc::ParseError, "wind timestamp " + format_iso8601(r.time) + " off the grid");
    const auto s = stations.index_of(r.station_id);
    if (!s) throw Error(Errc::ParseError, "unknown wind station '" + r.station_id + "'");
    const auto l = static_cast<std::size_t>(
        std::find(levels.values.begin(), levels.values.end(), r.level) - levels.values.begin());
    if (std::isfinite(r.speed_ms) && std::isfinite(r.direction_deg)) {
      const auto uv = decompose_wind(r.speed_ms, r.direction_deg);
      cube.at(*k, l, *s, 0) = uv.u;
      cube.at(*k, l, *s, 1) = uv.v;
      cube.mask[cube.index(*k, l, *s, 0)] = 1;
      cube.mask[cube.index(*k, l, *s, 1)] = 1;
    }
    if (std::isfinite(r.w_ms)) {
      cube.at(*k, l, *s, 2) = r.w_ms;
      cube.mask[cube.index(*k, l, *s, 2)] = 1;
    }
  }
  return cube;
}

std::string wind_to_csv(const WindCube& cube) {
  std::string out = "# level_kind=" + std::string(to_string(cube.levels.kind)) + "\n";
  out += "timestamp,station_id,level,wind_speed_ms,wind_dir_deg,w_ms\n";
  for (std::size_t t = 0; t < cube.n_time(); ++t) {
    const std::string ts = format_iso8601(cube.axis.time_at(t));
    for (std::size_t s = 0; s < cube.n_stations(); ++s)
      for (std::size_t l = 0; l < cube.n_levels(); ++l) {
        const bool uv = cube.observed(t, l, s, 0) && cube.observed(t, l, s, 1);
        const bool w = cube.observed(t, l, s, 2);
        if (!uv && !w) continue;
        const auto sd = compose_wind(cube.at(t, l, s, 0), cube.at(t, l, s, 1));
        out += ts + "," + cube.stations[s].id + "," + fmt17(cube.levels.values[l]) + "," +
               (uv ? fmt17(sd.speed) : "nan") + "," + (uv ? fmt17(sd.direction_deg) : "nan") + "," +
               (w ? fmt17(cube.at(t, l, s, 2)) : "nan") + "\n";
      }
  }
  return out;
}

Bytes encode_panel(const ZtdPanel& panel) {
  Writer w;
  write_header(w, "GWCZ", panel.axis, panel.stations);
  payload(w, panel.values, panel.mask);
  return w.take();
}

ZtdPanel decode_panel(const Bytes& bytes) {
  Reader r(bytes);
  ZtdPanel p;
  read_header(r, "GWCZ", p.axis, p.stations);
  read_payload(r, p.axis.count * p.stations.size(), p.values, p.mask);
  return p;
}

Bytes encode_cube(const WindCube& cube) {
  Writer w;
  write_header(w, "GWCW", cube.axis, cube.stations);
  w.u8(static_cast<std::uint8_t>(cube.levels.kind));
  w.u64(cube.levels.size());
  for (double v : cube.levels.values) w.f64(v);
  w.u64(cube.components);
  payload(w, cube.values, cube.mask);
  return w.take();
}

WindCube decode_cube(const Bytes& bytes) {
  Reader r(bytes);
  WindCube c;
  read_header(r, "GWCW", c.axis, c.stations);
  const auto kind = r.u8();
  if (kind > 1) throw Error(Errc::ParseError, "bad level kind");
  c.levels.kind = static_cast<LevelKind>(kind);
  c.levels.values.resize(r.u64());
  for (auto& v : c.levels.values) v = r.f64();
  c.components = r.u64();
  read_payload(r, c.axis.count * c.levels.size() * c.stations.size() * c.components, c.values, c.mask);
  return c;
}

void write_panel(const std::filesystem::path& path, const ZtdPanel& panel) {
  write_bytes(path, encode_panel(panel));
}
ZtdPanel read_panel(const std::filesystem::path& path) { return decode_panel(read_bytes(path)); }
void write_cube(const std::filesystem::path& path, const WindCube& cube) {
  write_bytes(path, encode_cube(cube));
}
WindCube read_cube(const std::filesystem::path& path) { return decode_cube(read_bytes(path)); }

}  // namespace gwc::io
