#include "gwindcast/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "gwindcast/error.hpp"
#include "gwindcast/rng.hpp"

namespace gwc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

// Temporal fill of one station column; returns the number of filled entries.
std::size_t fill_column(ZtdPanel& out, std::size_t s) {
  const std::size_t n = out.n_time();
  std::size_t prev = n;  // index of last observed, n = none yet
  std::size_t filled = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!out.observed(t, s)) continue;
    if (prev == n) {
      for (std::size_t k = 0; k < t; ++k) out.at(k, s) = out.at(t, s);
      filled += t;
    } else {
      const double a = out.at(prev, s);
      const double b = out.at(t, s);
      const double span = static_cast<double>(t - prev);
      for (std::size_t k = prev + 1; k < t; ++k) {
        const double w = static_cast<double>(k - prev) / span;
        out.at(k, s) = a + (b - a) * w;
      }
      filled += t - prev - 1;
    }
    prev = t;
  }
  for (std::size_t k = prev + 1; k < n; ++k) out.at(k, s) = out.at(prev, s);
  filled += n - prev - 1;
  return filled;
}

}  // namespace

ZtdPanel fill_gaps(const ZtdPanel& panel, GapFillReport* report) {
  throw_if_invalid(validate(panel), "ZTD panel");
  const std::size_t n_st = panel.n_stations();
  const std::size_t n_t = panel.n_time();

  std::vector<bool> has_obs(n_st, false);
  for (std::size_t t = 0; t < n_t; ++t)
    for (std::size_t s = 0; s < n_st; ++s)
      if (panel.observed(t, s)) has_obs[s] = true;
  if (std::none_of(has_obs.begin(), has_obs.end(), [](bool b) { return b; })) {
    throw Error(Errc::AllMissing, "no station has any observation");
  }

  ZtdPanel out = panel;
  GapFillReport rep;
  rep.filled_per_station.assign(n_st, 0);
  for (std::size_t s = 0; s < n_st; ++s) {
    if (has_obs[s]) rep.filled_per_station[s] = fill_column(out, s);
  }

  for (std::size_t s = 0; s < n_st; ++s) {
    if (has_obs[s]) continue;
    std::vector<std::pair<double, std::size_t>> cand;
    for (std::size_t o = 0; o < n_st; ++o) {
      if (!has_obs[o]) continue;
      cand.emplace_back(haversine_km(panel.stations[s].lat, panel.stations[s].lon,
                                     panel.stations[o].lat, panel.stations[o].lon),
                        o);
    }
    const std::size_t k = std::min<std::size_t>(4, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    cand.resize(k);
    std::vector<double> w(k);
    std::optional<std::size_t> colocated;
    for (std::size_t i = 0; i < k; ++i) {
      if (cand[i].first == 0.0) {
        colocated = cand[i].second;
        break;
      }
      w[i] = 1.0 / cand[i].first;
    }
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t t = 0; t < n_t; ++t) {
      if (colocated) {
        out.at(t, s) = out.at(t, *colocated);
        continue;
      }
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += w[i] * out.at(t, cand[i].second);
      out.at(t, s) = acc / wsum;
    }
    rep.filled_per_station[s] = n_t;
    rep.spatially_filled_stations.push_back(s);
  }
  std::fill(out.mask.begin(), out.mask.end(), std::uint8_t{1});
  if (report) *report = std::move(rep);
  return out;
}

WindCube resample_time(const WindCube& cube, std::int64_t target_step) {
  if (target_step <= 0) throw Error(Errc::InvalidConfig, "target_step must be positive");
  throw_if_invalid(validate(cube.axis), "wind time axis");
  const auto& src = cube.axis;
  const std::int64_t first = ceil_div(src.start, target_step) * target_step;
  const std::int64_t last = floor_div(src.end(), target_step) * target_step;
  if (first > last) {
    throw Error(Errc::EmptyOverlap, "no multiple of " + std::to_string(target_step) +
                                        " s inside the source span");
  }
  TimeAxis axis{first, target_step, static_cast<std::size_t>((last - first) / target_step + 1)};
  WindCube out = WindCube::empty_like(axis, cube.levels, cube.stations);
  out.components = cube.components;
  const std::size_t frame = cube.frame_size();
  out.values.assign(axis.count * frame, kNaN);
  out.mask.assign(axis.count * frame, 0);

  for (std::size_t k = 0; k < axis.count; ++k) {
    const std::int64_t off = axis.time_at(k) - src.start;
    const auto i0 = static_cast<std::size_t>(off / src.step);
    const std::int64_t rem = off % src.step;
    const double* a = &cube.values[i0 * frame];
    const std::uint8_t* ma = &cube.mask[i0 * frame];
    double* dst = &out.values[k * frame];
    std::uint8_t* md = &out.mask[k * frame];
    if (rem == 0) {
      std::copy(a, a + frame, dst);
      std::copy(ma, ma + frame, md);
      continue;
    }
    const double w = static_cast<double>(rem) / static_cast<double>(src.step);
    const double* b = a + frame;
    const std::uint8_t* mb = ma + frame;
    for (std::size_t j = 0; j < frame; ++j) {
      if (ma[j] && mb[j]) {
        dst[j] = a[j] + (b[j] - a[j]) * w;
        md[j] = 1;
      }
    }
  }
  return out;
}

double height_to_pressure(double height_m, const PressureMapParams& params) {
  return params.p0_hpa * std::exp(-height_m / params.scale_height_m);
}

WindCube interpolate_to_pressure_levels(const WindCube& cube, const LevelSpec& targets,
                                        const PressureMapParams& params) {
  if (cube.levels.kind != LevelKind::HeightM) {
    throw Error(Errc::InvalidConfig, "source cube must be on height levels");
  }
  if (targets.kind != LevelKind::PressureHPa) {
    throw Error(Errc::InvalidConfig, "target levels must be pressure levels");
  }
  if (!(params.p0_hpa > 0.0) || !(params.scale_height_m > 0.0)) {
    throw Error(Errc::InvalidConfig, "pressure map parameters must be positive");
  }
  throw_if_invalid(validate(cube.levels), "source levels");
  throw_if_invalid(validate(targets), "target levels");
  const std::size_t nl = cube.n_levels();
  if (nl == 0) throw Error(Errc::InvalidConfig, "source cube has no levels");

  // Ascending heights map to descending pressures, hence ascending -ln p.
  std::vector<double> logp(nl);
  for (std::size_t l = 0; l < nl; ++l) logp[l] = std::log(height_to_pressure(cube.levels.values[l], params));

  WindCube out = WindCube::empty_like(cube.axis, targets, cube.stations);
  out.components = cube.components;
  out.values.assign(cube.n_time() * targets.size() * cube.n_stations() * cube.components, kNaN);
  out.mask.assign(out.values.size(), 0);

  for (std::size_t j = 0; j < targets.size(); ++j) {
    const double lp = std::log(targets.values[j]);
    std::size_t lo = 0, hi = 0;
    double w = 0.0;
    if (lp >= logp.front()) {
      lo = hi = 0;
    } else if (lp <= logp.back()) {
      lo = hi = nl - 1;
    } else {
      for (std::size_t l = 0; l + 1 < nl; ++l) {
        if (lp <= logp[l] && lp >= logp[l + 1]) {
          lo = l;
          hi = l + 1;
          w = (logp[l] - lp) / (logp[l] - logp[l + 1]);
          break;
        }
      }
      if (w == 0.0) hi = lo;
      else if (w == 1.0) lo = hi;
    }
    for (std::size_t t = 0; t < cube.n_time(); ++t)
      for (std::size_t s = 0; s < cube.n_stations(); ++s)
        for (std::size_t c = 0; c < cube.components; ++c) {
          const auto dst = out.index(t, j, s, c);
          const auto ia = cube.index(t, lo, s, c);
          const auto ib = cube.index(t, hi, s, c);
          if (!cube.mask[ia] || !cube.mask[ib]) continue;
          out.values[dst] = lo == hi ? cube.values[ia]
                                     : cube.values[ia] + (cube.values[ib] - cube.values[ia]) * w;
          out.mask[dst] = 1;
        }
  }
  return out;
}

WindUV decompose_wind(double speed, double direction_deg) {
  if (speed < 0.0 || std::isnan(speed)) {
    throw Error(Errc::NegativeSpeed, "speed " + std::to_string(speed));
  }
  double d = std::fmod(direction_deg, 360.0);
  if (d < 0.0) d += 360.0;
  const double rad = deg2rad(d);
  return {-speed * std::sin(rad), -speed * std::cos(rad)};
}

WindSpeedDir compose_wind(double u, double v) {
  const double speed = std::hypot(u, v);
  if (speed == 0.0) return {0.0, 0.0};
  double d = std::atan2(-u, -v) * 180.0 / std::numbers::pi;
  if (d < 0.0) d += 360.0;
  if (d >= 360.0) d -= 360.0;
  if (d == 0.0) d = 0.0;  // drop the sign of -0
  return {speed, d};
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = deg2rad(lat1), p2 = deg2rad(lat2);
  const double dp = p2 - p1;
  const double dl = deg2rad(lon2 - lon1);
  const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

StationTable select_nearest_stations(const StationTable& table, double ref_lat, double ref_lon,
                                     std::size_t k) {
  if (k < 1 || k > table.size()) {
    throw Error(Errc::KTooLarge, "k=" + std::to_string(k) + " with " +
                                     std::to_string(table.size()) + " stations");
  }
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    order.emplace_back(haversine_km(ref_lat, ref_lon, table[i].lat, table[i].lon), i);
  }
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first < b.first;
                      return table[a.second].id < table[b.second].id;
                    });
  StationTable out;
  for (std::size_t i = 0; i < k; ++i) out.entries.push_back(table[order[i].second]);
  return out;
}

StationTable restore_table_order(const StationTable& table, const StationTable& subset) {
  StationTable out;
  for (const auto& st : table.entries) {
    if (subset.index_of(st.id)) out.entries.push_back(st);
  }
  return out;
}

ZtdPanel select_panel_stations(const ZtdPanel& panel, const StationTable& stations) {
  std::vector<std::size_t> cols;
  for (const auto& st : stations.entries) {
    auto i = panel.stations.index_of(st.id);
    if (!i) throw Error(Errc::Misaligned, "station '" + st.id + "' not in panel");
    cols.push_back(*i);
  }
  ZtdPanel out = ZtdPanel::empty_like(panel.axis, stations);
  for (std::size_t t = 0; t < panel.n_time(); ++t)
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out.at(t, j) = panel.at(t, cols[j]);
      out.mask[out.index(t, j)] = panel.mask[panel.index(t, cols[j])];
    }
  return out;
}

WindCube select_cube_stations(const WindCube& cube, const StationTable& stations) {
  std::vector<std::size_t> cols;
  for (const auto& st : stations.entries) {
    auto i = cube.stations.index_of(st.id);
    if (!i) throw Error(Errc::Misaligned, "station '" + st.id + "' not in cube");
    cols.push_back(*i);
  }
  WindCube out = WindCube::empty_like(cube.axis, cube.levels, stations);
  for (std::size_t t = 0; t < cube.n_time(); ++t)
    for (std::size_t l = 0; l < cube.n_levels(); ++l)
      for (std::size_t j = 0; j < cols.size(); ++j)
        for (std::size_t c = 0; c < kComponents; ++c) {
          out.at(t, l, j, c) = cube.at(t, l, cols[j], c);
          out.mask[out.index(t, l, j, c)] = cube.mask[cube.index(t, l, cols[j], c)];
        }
  return out;
}

SampleSet build_samples(const ZtdPanel& ztd, const WindCube& wind, std::size_t window_steps,
                        std::size_t lead_steps, const SplitConfig& split) {
  if (window_steps < 1 || lead_steps < 1) {
    throw Error(Errc::InvalidConfig, "window_steps and lead_steps must be >= 1");
  }
  double rsum = 0.0;
  for (double r : split.ratios) {
    if (!(r >= 0.0)) throw Error(Errc::InvalidConfig, "split ratios must be non-negative");
    rsum += r;
  }
  if (std::abs(rsum - 1.0) > 1e-12) throw Error(Errc::InvalidConfig, "split ratios must sum to 1");
  if (!(split.ratios[0] > 0.0)) throw Error(Errc::InvalidConfig, "train ratio must be positive");
  if (wind.components != kComponents) throw Error(Errc::ShapeMismatch, "wind cube needs 3 components");

  const auto& za = ztd.axis;
  const auto& wa = wind.axis;
  if (za.step != wa.step || (wa.start - za.start) % za.step != 0) {
    throw Error(Errc::Misaligned, "ZTD and wind time grids differ");
  }

  SampleSet set;
  set.window_steps = window_steps;
  set.lead_steps = lead_steps;
  set.step = za.step;
  set.input_stations = ztd.stations;
  set.target_stations = wind.stations;
  set.levels = wind.levels;

  const std::size_t n_feat = ztd.n_stations();
  const std::size_t frame = wind.frame_size();
  const auto lead_dt = static_cast<std::int64_t>(lead_steps) * za.step;
  for (std::size_t k = window_steps - 1; k < za.count; ++k) {
    const std::int64_t t_y = za.time_at(k) + lead_dt;
    const auto wi = wa.index_of(t_y);
    if (!wi) continue;
    bool ok = true;
    for (std::size_t w = 0; w < window_steps && ok; ++w) {
      const std::size_t row = k + 1 - window_steps + w;
      for (std::size_t s = 0; s < n_feat; ++s) {
        if (!ztd.observed(row, s) || !std::isfinite(ztd.at(row, s))) {
          ok = false;
          break;
        }
      }
    }
    const std::size_t base = *wi * frame;
    for (std::size_t j = 0; j < frame && ok; ++j) ok = wind.mask[base + j] != 0;
    if (!ok) continue;

    set.target_times.push_back(t_y);
    for (std::size_t w = 0; w < window_steps; ++w) {
      const std::size_t row = k + 1 - window_steps + w;
      const double* src = &ztd.values[row * n_feat];
      set.inputs.insert(set.inputs.end(), src, src + n_feat);
    }
    set.targets.insert(set.targets.end(), wind.values.begin() + static_cast<std::ptrdiff_t>(base),
                       wind.values.begin() + static_cast<std::ptrdiff_t>(base + frame));
  }
  const std::size_t n = set.size();
  if (n == 0) throw Error(Errc::NoSamples, "no complete (window, target) pair on the common grid");

  // Seeded permutation; the first n_train shuffled positions go to train, etc.
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(split.seed);
  rng.shuffle(std::span<std::size_t>(perm));
  const auto n_train = static_cast<std::size_t>(std::llround(split.ratios[0] * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(split.ratios[1] * static_cast<double>(n)));
  n_val = std::min(n_val, n - std::min(n, n_train));
  set.split_labels.assign(n, Split::Test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) set.split_labels[perm[i]] = Split::Train;
    else if (i < n_train + n_val) set.split_labels[perm[i]] = Split::Val;
  }

  const auto train = set.indices(Split::Train);
  if (train.empty()) throw Error(Errc::EmptySplit, "train split is empty");

  // Two-pass mean/std over the train rows; `gather(i, j)` yields feature j of
  // train observation i.
  auto stats = [](std::size_t n_obs, std::size_t n_feat, auto gather) {
    NormStats st;
    st.mean.assign(n_feat, 0.0);
    st.std.assign(n_feat, 0.0);
    for (std::size_t i = 0; i < n_obs; ++i)
      for (std::size_t j = 0; j < n_feat; ++j) st.mean[j] += gather(i, j);
    for (auto& m : st.mean) m /= static_cast<double>(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i)
      for (std::size_t j = 0; j < n_feat; ++j) {
        const double d = gather(i, j) - st.mean[j];
        st.std[j] += d * d;
      }
    for (std::size_t j = 0; j < n_feat; ++j) {
      st.std[j] = std::sqrt(st.std[j] / static_cast<double>(n_obs));
      // Rounding in the mean must not turn a constant column into a tiny std.
      const double first = gather(0, j);
      bool constant = true;
      for (std::size_t i = 1; i < n_obs && constant; ++i) constant = gather(i, j) == first;
      if (constant) st.mean[j] = first;
      if (constant || !(st.std[j] > 0.0)) st.std[j] = 1.0;
    }
    return st;
  };

  const std::size_t stride = set.input_stride();
  set.input_stats = stats(train.size() * window_steps, n_feat, [&](std::size_t i, std::size_t j) {
    const std::size_t sample = train[i / window_steps];
    return set.inputs[sample * stride + (i % window_steps) * n_feat + j];
  });
  set.target_stats = stats(train.size(), frame, [&](std::size_t i, std::size_t j) {
    return set.targets[train[i] * frame + j];
  });
  return set;
}

}  // namespace gwc
