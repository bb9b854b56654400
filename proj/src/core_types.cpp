#include "gwindcast/core_types.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "gwindcast/error.hpp"

namespace gwc {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::optional<std::size_t> StationTable::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].id == id) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> TimeAxis::index_of(std::int64_t t) const noexcept {
  if (step <= 0 || t < start) return std::nullopt;
  const std::int64_t off = t - start;
  if (off % step != 0) return std::nullopt;
  const auto k = static_cast<std::size_t>(off / step);
  if (k >= count) return std::nullopt;
  return k;
}

ZtdPanel ZtdPanel::empty_like(const TimeAxis& axis, const StationTable& stations) {
  ZtdPanel p;
  p.axis = axis;
  p.stations = stations;
  p.values.assign(axis.count * stations.size(), kNaN);
  p.mask.assign(p.values.size(), 0);
  return p;
}

WindCube WindCube::empty_like(const TimeAxis& axis, const LevelSpec& levels,
                              const StationTable& stations) {
  WindCube c;
  c.axis = axis;
  c.levels = levels;
  c.stations = stations;
  c.values.assign(axis.count * levels.size() * stations.size() * kComponents, kNaN);
  c.mask.assign(c.values.size(), 0);
  return c;
}

std::string_view to_string(LevelKind kind) noexcept {
  return kind == LevelKind::HeightM ? "height_m" : "pressure_hPa";
}

std::optional<LevelKind> level_kind_from_string(std::string_view s) noexcept {
  if (s == "height_m") return LevelKind::HeightM;
  if (s == "pressure_hPa") return LevelKind::PressureHPa;
  return std::nullopt;
}

std::vector<Violation> validate(const StationTable& table) {
  std::vector<Violation> out;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& s = table[i];
    if (!seen.insert(s.id).second) {
      out.push_back({"station_id unique", {i}, "duplicate id '" + s.id + "'"});
    }
    if (!(s.lat >= -90.0 && s.lat <= 90.0)) {
      out.push_back({"lat in [-90, 90]", {i}, "station '" + s.id + "'"});
    }
    if (!(s.lon >= -180.0 && s.lon <= 180.0)) {
      out.push_back({"lon in [-180, 180]", {i}, "station '" + s.id + "'"});
    }
  }
  return out;
}

std::vector<Violation> validate(const TimeAxis& axis) {
  std::vector<Violation> out;
  if (axis.step <= 0) out.push_back({"step > 0", {}, "step=" + std::to_string(axis.step)});
  if (axis.count == 0) out.push_back({"count positive", {}, ""});
  return out;
}

std::vector<Violation> validate(const LevelSpec& levels) {
  std::vector<Violation> out;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const double a = levels.values[i - 1];
    const double b = levels.values[i];
    const bool ok = levels.kind == LevelKind::HeightM ? b > a : b < a;
    if (!ok) {
      out.push_back({"levels strictly monotonic", {i},
                     levels.kind == LevelKind::HeightM ? "heights must ascend"
                                                       : "pressures must descend"});
    }
  }
  return out;
}

std::vector<Violation> validate(const ZtdPanel& panel) {
  auto out = validate(panel.axis);
  auto st = validate(panel.stations);
  out.insert(out.end(), st.begin(), st.end());
  const std::size_t expected = panel.axis.count * panel.stations.size();
  if (panel.values.size() != expected) {
    out.push_back({"values shape equals (time, station)", {},
                   "have " + std::to_string(panel.values.size()) + ", expected " +
                       std::to_string(expected)});
    return out;
  }
  if (panel.mask.size() != expected) {
    out.push_back({"mask shape equals values shape", {}, ""});
    return out;
  }
  for (std::size_t t = 0; t < panel.n_time(); ++t) {
    for (std::size_t s = 0; s < panel.n_stations(); ++s) {
      if (panel.observed(t, s) && !std::isfinite(panel.at(t, s))) {
        out.push_back({"finite where observed", {t, s}, ""});
      }
    }
  }
  return out;
}

std::vector<Violation> validate(const WindCube& cube) {
  auto out = validate(cube.axis);
  auto st = validate(cube.stations);
  out.insert(out.end(), st.begin(), st.end());
  auto lv = validate(cube.levels);
  out.insert(out.end(), lv.begin(), lv.end());
  if (cube.components != kComponents) {
    out.push_back({"component axis length", {},
                   "have " + std::to_string(cube.components) + ", expected 3"});
  }
  const std::size_t expected =
      cube.axis.count * cube.levels.size() * cube.stations.size() * cube.components;
  if (cube.values.size() != expected) {
    out.push_back({"values shape equals (time, level, station, component)", {}, ""});
    return out;
  }
  if (cube.mask.size() != expected) {
    out.push_back({"mask shape equals values shape", {}, ""});
    return out;
  }
  for (std::size_t t = 0; t < cube.n_time(); ++t)
    for (std::size_t l = 0; l < cube.n_levels(); ++l)
      for (std::size_t s = 0; s < cube.n_stations(); ++s)
        for (std::size_t c = 0; c < cube.components; ++c)
          if (cube.observed(t, l, s, c) && !std::isfinite(cube.at(t, l, s, c)))
            out.push_back({"finite where observed", {t, l, s, c}, ""});
  return out;
}

void throw_if_invalid(const std::vector<Violation>& v, std::string_view what) {
  if (v.empty()) return;
  std::string msg(what);
  msg += " violates ";
  for (std::size_t i = 0; i < v.size() && i < 3; ++i) {
    if (i) msg += "; ";
    msg += v[i].invariant;
    if (!v[i].index.empty()) {
      msg += " at (";
      for (std::size_t j = 0; j < v[i].index.size(); ++j) {
        if (j) msg += ",";
        msg += std::to_string(v[i].index[j]);
      }
      msg += ")";
    }
    if (!v[i].detail.empty()) msg += " [" + v[i].detail + "]";
  }
  if (v.size() > 3) msg += " (+" + std::to_string(v.size() - 3) + " more)";
  throw Error(Errc::ParseError, msg);
}

}  // namespace gwc
