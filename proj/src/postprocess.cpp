#include "gwindcast/postprocess.hpp"

#include <algorithm>
#include <cmath>

#include "gwindcast/error.hpp"

namespace gwc {

using nlohmann::json;
using nn::Tensor;

std::string_view to_string(CdfMode m) noexcept {
  return m == CdfMode::GaussianAffine ? "gaussian_affine" : "empirical_quantile";
}

std::string_view to_string(CdfPooling p) noexcept {
  switch (p) {
    case CdfPooling::Channel: return "channel";
    case CdfPooling::Component: return "component";
    case CdfPooling::Global: return "global";
  }
  return "?";
}

CdfMode cdf_mode_from_string(std::string_view s) {
  if (s == "gaussian_affine") return CdfMode::GaussianAffine;
  if (s == "empirical_quantile") return CdfMode::EmpiricalQuantile;
  throw Error(Errc::InvalidConfig, "unknown CDF mode '" + std::string(s) + "'");
}

CdfPooling cdf_pooling_from_string(std::string_view s) {
  if (s == "channel") return CdfPooling::Channel;
  if (s == "component") return CdfPooling::Component;
  if (s == "global") return CdfPooling::Global;
  throw Error(Errc::InvalidConfig, "unknown CDF pooling '" + std::string(s) + "'");
}

std::vector<double> sample_quantiles(std::vector<double> values, std::size_t n) {
  if (values.empty()) throw Error(Errc::EmptyTrain, "no values to take quantiles of");
  if (n < 2) throw Error(Errc::InvalidConfig, "need at least 2 quantiles");
  std::sort(values.begin(), values.end());
  std::vector<double> q(n);
  const double last = static_cast<double>(values.size() - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const double h = last * static_cast<double>(k) / static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    q[k] = values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
  }
  // Rounding can only break monotonicity by an ulp; restore it.
  for (std::size_t k = 1; k < n; ++k) q[k] = std::max(q[k], q[k - 1]);
  return q;
}

namespace {

std::size_t group_of(CdfPooling p, std::size_t channel) {
  switch (p) {
    case CdfPooling::Channel: return channel;
    case CdfPooling::Component: return channel % kComponents;
    case CdfPooling::Global: return 0;
  }
  return channel;
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

CdfMap fit_cdf_map(const Tensor& source, const Tensor& target, const CdfConfig& cfg) {
  if (source.shape() != target.shape() || source.rank() != 2) {
    throw Error(Errc::ChannelMismatch, "source " + nn::shape_string(source.shape()) + " vs target " +
                                           nn::shape_string(target.shape()));
  }
  const std::size_t n = source.dim(0), c = source.dim(1);
  if (n == 0) throw Error(Errc::EmptyTrain, "no training rows");
  if (cfg.pooling == CdfPooling::Component && c % kComponents != 0) {
    throw Error(Errc::ChannelMismatch, "component pooling needs a multiple of 3 channels");
  }
  std::size_t n_groups = 1;
  if (cfg.pooling == CdfPooling::Channel) n_groups = c;
  else if (cfg.pooling == CdfPooling::Component) n_groups = kComponents;

  std::vector<std::vector<double>> src(n_groups), tgt(n_groups);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t gi = group_of(cfg.pooling, j);
      src[gi].push_back(source[i * c + j]);
      tgt[gi].push_back(target[i * c + j]);
    }
  std::vector<ChannelCdf> groups(n_groups);
  for (std::size_t gi = 0; gi < n_groups; ++gi) {
    auto& g = groups[gi];
    if (cfg.mode == CdfMode::GaussianAffine) {
      mean_std(src[gi], g.src_mean, g.src_std);
      mean_std(tgt[gi], g.tgt_mean, g.tgt_std);
    } else {
      g.src_quantiles = sample_quantiles(src[gi], cfg.n_quantiles);
      g.tgt_quantiles = sample_quantiles(tgt[gi], cfg.n_quantiles);
    }
  }
  CdfMap map;
  map.config = cfg;
  map.channels.reserve(c);
  for (std::size_t j = 0; j < c; ++j) map.channels.push_back(groups[group_of(cfg.pooling, j)]);
  return map;
}

CdfMap fit_cdf_map(const Model& model, const SampleSet& set, const CdfConfig& cfg) {
  const auto idx = set.indices(Split::Train);
  if (idx.empty()) throw Error(Errc::EmptyTrain, "train split is empty");
  const Tensor raw = predict_outputs(model, set, idx);
  const std::size_t o = set.output_dim();
  Tensor truth(nn::Shape{idx.size(), o});
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(&set.targets[idx[r] * o], o, truth.ptr() + r * o);
  return fit_cdf_map(raw, truth, cfg);
}

double apply_channel(const CdfMap& map, std::size_t channel, double y) {
  const ChannelCdf& ch = map.channels.at(channel);
  if (map.config.mode == CdfMode::GaussianAffine) {
    if (ch.affine_passthrough()) return y;
    return (y - ch.src_mean) / ch.src_std * ch.tgt_std + ch.tgt_mean;
  }
  const auto& sq = ch.src_quantiles;
  const auto& tq = ch.tgt_quantiles;
  const std::size_t n = sq.size();
  // Source CDF: piecewise linear through (q_k, k / (n - 1)), clamped at the ends.
  double u;
  if (y <= sq.front()) {
    u = 0.0;
  } else if (y >= sq.back()) {
    u = 1.0;
  } else {
    const auto k = static_cast<std::size_t>(std::upper_bound(sq.begin(), sq.end(), y) - sq.begin()) - 1;
    u = (static_cast<double>(k) + (y - sq[k]) / (sq[k + 1] - sq[k])) / static_cast<double>(n - 1);
  }
  // Inverse target CDF.
  const double pos = u * static_cast<double>(n - 1);
  const auto k = std::min(static_cast<std::size_t>(pos), n - 2);
  const double frac = pos - static_cast<double>(k);
  return tq[k] + frac * (tq[k + 1] - tq[k]);
}

Tensor apply_cdf_map(const CdfMap& map, const Tensor& raw) {
  const std::size_t c = map.channels.size();
  if (raw.rank() != 2 || raw.dim(1) != c) {
    throw Error(Errc::ChannelMismatch, "map has " + std::to_string(c) + " channels, input " +
                                           nn::shape_string(raw.shape()));
  }
  Tensor out(raw.shape());
  for (std::size_t i = 0; i < raw.dim(0); ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = apply_channel(map, j, raw[i * c + j]);
  return out;
}

json to_json(const CdfMap& map) {
  json channels = json::array();
  for (const auto& ch : map.channels) {
    json e;
    if (map.config.mode == CdfMode::GaussianAffine) {
      e = {{"src_mean", ch.src_mean}, {"src_std", ch.src_std}, {"tgt_mean", ch.tgt_mean}, {"tgt_std", ch.tgt_std}};
    } else {
      e = {{"src_quantiles", ch.src_quantiles}, {"tgt_quantiles", ch.tgt_quantiles}};
    }
    channels.push_back(std::move(e));
  }
  return {{"format", "gwindcast-cdf-map"},
          {"version", 1},
          {"mode", to_string(map.config.mode)},
          {"pooling", to_string(map.config.pooling)},
          {"n_quantiles", map.config.n_quantiles},
          {"channels", channels}};
}

CdfMap cdf_map_from_json(const json& j) {
  if (j.value("format", "") != "gwindcast-cdf-map" || j.value("version", 0) != 1) {
    throw Error(Errc::ParseError, "not a version-1 CDF map");
  }
  CdfMap map;
  map.config.mode = cdf_mode_from_string(j.at("mode").get<std::string>());
  map.config.pooling = cdf_pooling_from_string(j.at("pooling").get<std::string>());
  map.config.n_quantiles = j.at("n_quantiles").get<std::size_t>();
  for (const auto& e : j.at("channels")) {
    ChannelCdf ch;
    if (map.config.mode == CdfMode::GaussianAffine) {
      ch.src_mean = e.at("src_mean").get<double>();
      ch.src_std = e.at("src_std").get<double>();
      ch.tgt_mean = e.at("tgt_mean").get<double>();
      ch.tgt_std = e.at("tgt_std").get<double>();
    } else {
      ch.src_quantiles = e.at("src_quantiles").get<std::vector<double>>();
      ch.tgt_quantiles = e.at("tgt_quantiles").get<std::vector<double>>();
      if (ch.src_quantiles.size() < 2 || ch.src_quantiles.size() != ch.tgt_quantiles.size()) {
        throw Error(Errc::ParseError, "quantile tables must share a length >= 2");
      }
    }
    map.channels.push_back(std::move(ch));
  }
  return map;
}

}  // namespace gwc
