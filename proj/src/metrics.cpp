#include "gwindcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "gwindcast/error.hpp"
#include "gwindcast/io.hpp"

namespace gwc {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(const SeriesSet& p, const SeriesSet& t) {
  if (p.n_cells != t.n_cells || p.n_time != t.n_time || p.values.size() != t.values.size()) {
    throw Error(Errc::ShapeMismatch, "prediction and truth series differ in shape");
  }
}

bool usable(double p, double t) { return std::isfinite(p) && std::isfinite(t); }

}  // namespace

SeriesSet::SeriesSet(std::size_t cells, std::size_t time)
    : n_cells(cells), n_time(time), values(cells * time, kNaN) {}

SeriesSet SeriesSet::single(std::span<const double> series) {
  SeriesSet s(1, series.size());
  std::copy(series.begin(), series.end(), s.values.begin());
  return s;
}

double rmse(const SeriesSet& pred, const SeriesSet& truth) {
  check_pair(pred, truth);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (!usable(pred.values[i], truth.values[i])) continue;
    const double e = pred.values[i] - truth.values[i];
    acc += e * e;
    ++n;
  }
  if (n == 0) throw Error(Errc::EmptyInput, "no paired values");
  return std::sqrt(acc / static_cast<double>(n));
}

double mae(const SeriesSet& pred, const SeriesSet& truth) {
  check_pair(pred, truth);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    if (!usable(pred.values[i], truth.values[i])) continue;
    acc += std::abs(pred.values[i] - truth.values[i]);
    ++n;
  }
  if (n == 0) throw Error(Errc::EmptyInput, "no paired values");
  return acc / static_cast<double>(n);
}

CellMean rmspe(const SeriesSet& pred, const SeriesSet& truth) {
  check_pair(pred, truth);
  CellMean out;
  double acc = 0.0;
  for (std::size_t c = 0; c < pred.n_cells; ++c) {
    double sq = 0.0, lo = INFINITY, hi = -INFINITY;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pred.n_time; ++t) {
      const double p = pred.at(c, t), y = truth.at(c, t);
      if (!usable(p, y)) continue;
      sq += (p - y) * (p - y);
      lo = std::min(lo, y);
      hi = std::max(hi, y);
      ++n;
    }
    if (n == 0 || !(hi - lo > 0.0)) {
      ++out.excluded_cells;
      continue;
    }
    acc += std::sqrt(sq / static_cast<double>(n)) / (hi - lo);
    ++out.used_cells;
  }
  if (out.used_cells == 0) throw Error(Errc::AllCellsDegenerate, "every cell has zero truth range");
  out.value = acc / static_cast<double>(out.used_cells);
  return out;
}

CellMean pearson_r(const SeriesSet& pred, const SeriesSet& truth) {
  check_pair(pred, truth);
  CellMean out;
  double acc = 0.0;
  for (std::size_t c = 0; c < pred.n_cells; ++c) {
    double mp = 0.0, my = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < pred.n_time; ++t) {
      const double p = pred.at(c, t), y = truth.at(c, t);
      if (!usable(p, y)) continue;
      mp += p;
      my += y;
      ++n;
    }
    if (n < 2) {
      ++out.excluded_cells;
      continue;
    }
    mp /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t t = 0; t < pred.n_time; ++t) {
      const double p = pred.at(c, t), y = truth.at(c, t);
      if (!usable(p, y)) continue;
      sxy += (p - mp) * (y - my);
      sxx += (p - mp) * (p - mp);
      syy += (y - my) * (y - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
      ++out.excluded_cells;
      continue;
    }
    acc += std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    ++out.used_cells;
  }
  if (out.used_cells == 0) throw Error(Errc::AllCellsDegenerate, "every cell has a constant series");
  out.value = acc / static_cast<double>(out.used_cells);
  return out;
}

MetricValues evaluate(const SeriesSet& pred, const SeriesSet& truth) {
  MetricValues v;
  v.rmse = rmse(pred, truth);
  v.mae = mae(pred, truth);
  v.n_cells = pred.n_cells;
  for (std::size_t i = 0; i < pred.values.size(); ++i) v.n_pairs += usable(pred.values[i], truth.values[i]);
  try {
    const auto c = rmspe(pred, truth);
    v.rmspe = c.value;
    v.rmspe_excluded = c.excluded_cells;
  } catch (const Error& e) {
    if (e.code() != Errc::AllCellsDegenerate) throw;
    v.rmspe_excluded = pred.n_cells;
  }
  try {
    const auto c = pearson_r(pred, truth);
    v.r = c.value;
    v.r_excluded = c.excluded_cells;
  } catch (const Error& e) {
    if (e.code() != Errc::AllCellsDegenerate) throw;
    v.r_excluded = pred.n_cells;
  }
  return v;
}

SeriesSet extract_series(const WindCube& cube, std::size_t level, std::size_t component,
                         std::span<const std::size_t> stations) {
  std::vector<std::size_t> all;
  if (stations.empty()) {
    all.resize(cube.n_stations());
    for (std::size_t s = 0; s < all.size(); ++s) all[s] = s;
    stations = all;
  }
  SeriesSet out(stations.size(), cube.n_time());
  for (std::size_t c = 0; c < stations.size(); ++c)
    for (std::size_t t = 0; t < cube.n_time(); ++t)
      if (cube.observed(t, level, stations[c], component)) out.at(c, t) = cube.at(t, level, stations[c], component);
  return out;
}

void MetricReport::append(const MetricReport& other) {
  cells.insert(cells.end(), other.cells.begin(), other.cells.end());
  pooled.insert(pooled.end(), other.pooled.begin(), other.pooled.end());
}

MetricReport evaluate_cubes(const WindCube& pred, const WindCube& truth, double lead_min,
                            std::span<const std::size_t> stations) {
  if (!(pred.axis == truth.axis) || !(pred.levels == truth.levels) || !(pred.stations == truth.stations) ||
      pred.components != truth.components) {
    throw Error(Errc::Misaligned, "prediction and truth cubes are not aligned");
  }
  MetricReport rep;
  rep.level_kind = truth.levels.kind;
  for (std::size_t c = 0; c < kComponents; ++c) {
    SeriesSet pooled_p, pooled_t;
    for (std::size_t l = 0; l < truth.n_levels(); ++l) {
      const SeriesSet p = extract_series(pred, l, c, stations);
      const SeriesSet t = extract_series(truth, l, c, stations);
      rep.cells.push_back({lead_min, truth.levels.values[l], c, evaluate(p, t)});
      pooled_p.n_time = pooled_t.n_time = p.n_time;
      pooled_p.n_cells += p.n_cells;
      pooled_t.n_cells += t.n_cells;
      pooled_p.values.insert(pooled_p.values.end(), p.values.begin(), p.values.end());
      pooled_t.values.insert(pooled_t.values.end(), t.values.begin(), t.values.end());
    }
    rep.pooled.push_back({lead_min, c, evaluate(pooled_p, pooled_t)});
  }
  return rep;
}

json to_json(const MetricValues& v) {
  json j = {{"rmse", v.rmse},       {"mae", v.mae},
            {"rmspe", nullptr},     {"r", nullptr},
            {"n_pairs", v.n_pairs}, {"n_cells", v.n_cells},
            {"rmspe_excluded_cells", v.rmspe_excluded},
            {"r_excluded_cells", v.r_excluded}};
  if (v.rmspe) j["rmspe"] = *v.rmspe;
  if (v.r) j["r"] = *v.r;
  return j;
}

json to_json(const MetricReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json e = to_json(c.values);
    e["lead_min"] = c.lead_min;
    e["level"] = c.level;
    e["component"] = kComponentNames[c.component];
    cells.push_back(std::move(e));
  }
  json pooled = json::array();
  for (const auto& p : r.pooled) {
    json e = to_json(p.values);
    e["lead_min"] = p.lead_min;
    e["component"] = kComponentNames[p.component];
    pooled.push_back(std::move(e));
  }
  return {{"level_kind", to_string(r.level_kind)}, {"cells", cells}, {"pooled", pooled}};
}

double metric_value(const MetricValues& v, std::string_view name) {
  if (name == "rmse") return v.rmse;
  if (name == "mae") return v.mae;
  if (name == "rmspe") return v.rmspe.value_or(kNaN);
  if (name == "r") return v.r.value_or(kNaN);
  throw Error(Errc::InvalidConfig, "unknown metric '" + std::string(name) + "'");
}

std::vector<MosaicTable> mosaic(std::span<const MetricReport> reports) {
  std::vector<double> leads;
  std::vector<double> levels;
  std::map<std::tuple<double, double, std::size_t>, const MetricValues*> lookup;
  for (const auto& rep : reports)
    for (const auto& c : rep.cells) {
      if (std::find(leads.begin(), leads.end(), c.lead_min) == leads.end()) leads.push_back(c.lead_min);
      if (std::find(levels.begin(), levels.end(), c.level) == levels.end()) levels.push_back(c.level);
      lookup[{c.lead_min, c.level, c.component}] = &c.values;
    }
  std::vector<MosaicTable> out;
  for (auto metric : kMetricNames)
    for (std::size_t comp = 0; comp < kComponents; ++comp) {
      std::string csv = "lead_min";
      for (double l : levels) csv += "," + io::fmt9(l);
      csv += "\n";
      for (double lead : leads) {
        csv += io::fmt9(lead);
        for (double l : levels) {
          const auto it = lookup.find({lead, l, comp});
          csv += ",";
          csv += it == lookup.end() ? "nan" : io::fmt9(metric_value(*it->second, metric));
        }
        csv += "\n";
      }
      out.push_back({std::string(metric), std::string(kComponentNames[comp]), std::move(csv)});
    }
  return out;
}

}  // namespace gwc
