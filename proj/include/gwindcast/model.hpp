#pragma once

// Encoder-only network: each time step of the ZTD window is a token whose
// features are the input stations (zero-padded to `width()`).
//
//   x + PE -> N x [MHA -> +res -> BatchNorm -> Dense(d, tanh) -> +res -> BatchNorm]
//          -> flatten -> Dense(window*d -> output_dim)
//
// The MLP baseline flattens the window and applies two tanh layers of
// window*stations units before the same linear head.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwindcast/core_types.hpp"
#include "gwindcast/neural/checkpoint.hpp"
#include "gwindcast/neural/graph.hpp"
#include "gwindcast/rng.hpp"
#include "gwindcast/samples.hpp"

namespace gwc {

enum class Arch { Transformer, Mlp };

std::string_view to_string(Arch a) noexcept;
Arch arch_from_string(std::string_view s);

struct ModelConfig {
  Arch arch = Arch::Transformer;
  std::size_t window_steps = 6;
  std::size_t n_stations = 0;
  std::size_t encoder_blocks = 2;
  std::size_t heads = 4;
  std::size_t output_dim = 0;
  std::uint64_t seed = 0;

  /// Token width: stations rounded up to a multiple of lcm(2, heads); the MLP
  /// takes the stations unpadded.
  std::size_t width() const noexcept;
  std::size_t hidden() const noexcept { return window_steps * n_stations; }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Closed form of the trainable parameter count:
///   transformer: N (5 d^2 + 9 d) + W d O + O
///   mlp:         2 (H^2 + H) + H O + O,  H = W * stations
std::size_t expected_parameter_count(const ModelConfig& cfg);

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const noexcept { return cfg_; }
  std::vector<nn::Param>& params() noexcept { return params_; }
  const std::vector<nn::Param>& params() const noexcept { return params_; }
  std::vector<nn::BatchNormState>& norm_states() noexcept { return bn_; }
  const std::vector<nn::BatchNormState>& norm_states() const noexcept { return bn_; }
  std::size_t parameter_count() const;

  /// x: [batch x window x width]. Training mode uses batch statistics in the
  /// normalization layers and updates their running statistics.
  nn::NodeId forward(nn::Graph& g, nn::NodeId x, bool training);
  /// Inference-mode forward; never mutates the model.
  nn::NodeId forward(nn::Graph& g, nn::NodeId x) const;
  /// Inference-mode forward on a plain tensor.
  nn::Tensor predict(const nn::Tensor& x) const;

  nn::Checkpoint checkpoint() const;
  /// Restores weights and running statistics; throws ConfigMismatch when the
  /// checkpoint was written for a different configuration.
  void load(const nn::Checkpoint& ckpt);

 private:
  template <class Self>
  static nn::NodeId forward_impl(Self& self, nn::Graph& g, nn::NodeId x, bool training);

  std::size_t add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng);
  std::size_t add_filled(std::string name, nn::Shape shape, double fill);

  struct Block {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t bn1_gamma, bn1_beta, ffn_w, ffn_b, bn2_gamma, bn2_beta;
  };

  ModelConfig cfg_;
  std::vector<nn::Param> params_;
  std::vector<nn::BatchNormState> bn_;
  std::vector<Block> blocks_;
  std::vector<std::size_t> mlp_;  // w, b pairs of the hidden layers
  std::size_t head_w_ = 0, head_b_ = 0;
  nn::Tensor pe_;
};

/// Normalized, zero-padded model inputs and targets for a batch of samples.
struct Batch {
  nn::Tensor x;  // [batch x window x width]
  nn::Tensor y;  // [batch x output_dim]
};

Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices, std::size_t width);

/// Inference-mode outputs for `indices`, un-normalized with the train target
/// statistics: [n x output_dim].
nn::Tensor predict_outputs(const Model& model, const SampleSet& set, std::span<const std::size_t> indices,
                           std::size_t chunk = 256);

/// Reshapes per-sample rows onto a (time x level x station x 3) cube whose
/// axis spans every sample's target time; only the given samples are unmasked.
WindCube rows_to_cube(const SampleSet& set, std::span<const std::size_t> indices, const nn::Tensor& rows);

WindCube predict_denormalized(const Model& model, const SampleSet& set, Split split);
WindCube truth_cube(const SampleSet& set, Split split);

}  // namespace gwc
