#pragma once

// CDF matching of model outputs onto the training-target distribution.
// Statistics come from the train split only: source = model outputs on train
// inputs, target = true train targets.

#include <string_view>
#include <vector>

#include <json.hpp>

#include "gwindcast/model.hpp"
#include "gwindcast/neural/tensor.hpp"
#include "gwindcast/samples.hpp"

namespace gwc {

enum class CdfMode { GaussianAffine, EmpiricalQuantile };
/// Granularity of the fitted statistics: per output channel
/// (level, station, component), per component, or one global map.
enum class CdfPooling { Channel, Component, Global };

std::string_view to_string(CdfMode m) noexcept;
std::string_view to_string(CdfPooling p) noexcept;
CdfMode cdf_mode_from_string(std::string_view s);
CdfPooling cdf_pooling_from_string(std::string_view s);

struct CdfConfig {
  CdfMode mode = CdfMode::GaussianAffine;
  CdfPooling pooling = CdfPooling::Channel;
  std::size_t n_quantiles = 101;
};

struct ChannelCdf {
  double src_mean = 0.0, src_std = 0.0;
  double tgt_mean = 0.0, tgt_std = 0.0;
  std::vector<double> src_quantiles;  // non-decreasing
  std::vector<double> tgt_quantiles;

  /// Affine mode leaves a channel untouched when either std is not positive.
  bool affine_passthrough() const noexcept { return !(src_std > 0.0) || !(tgt_std > 0.0); }
  bool operator==(const ChannelCdf&) const = default;
};

struct CdfMap {
  CdfConfig config;
  std::vector<ChannelCdf> channels;  // one per output channel (pooled entries repeat)

  bool operator==(const CdfMap& o) const {
    return config.mode == o.config.mode && config.pooling == o.config.pooling &&
           config.n_quantiles == o.config.n_quantiles && channels == o.channels;
  }
};

/// Type-7 (linear) sample quantiles at probabilities k / (n - 1), k = 0..n-1.
std::vector<double> sample_quantiles(std::vector<double> values, std::size_t n);

/// Fits from row-major [samples x channels] source/target matrices.
CdfMap fit_cdf_map(const nn::Tensor& source, const nn::Tensor& target, const CdfConfig& cfg = {});
/// Runs `model` over the train split of `set` and fits against the train targets.
CdfMap fit_cdf_map(const Model& model, const SampleSet& set, const CdfConfig& cfg = {});

double apply_channel(const CdfMap& map, std::size_t channel, double y);
nn::Tensor apply_cdf_map(const CdfMap& map, const nn::Tensor& raw);

nlohmann::json to_json(const CdfMap& map);
CdfMap cdf_map_from_json(const nlohmann::json& j);

}  // namespace gwc
