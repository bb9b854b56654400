#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gwindcast/model.hpp"
#include "gwindcast/neural/checkpoint.hpp"
#include "gwindcast/samples.hpp"

namespace gwc {

struct TrainConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t max_epochs = 5000;
  std::size_t patience = 1000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

/// Throws InvalidConfig unless 0 < beta1, beta2 < 1, eps > 0, 1 <= patience <= max_epochs.
void validate(const TrainConfig& cfg);

/// First/second moment estimates per parameter, plus the step counter.
struct AdamState {
  std::vector<nn::Tensor> m;
  std::vector<nn::Tensor> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update over `params`, then zeroes their gradients:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
/// Throws NonFiniteGradient naming the parameter before touching any state.
void adam_step(std::span<nn::Param> params, AdamState& state, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_mse = 0.0;
  bool early_stopped = false;
};

std::string history_to_csv(const TrainHistory& h);

/// Full validation-split MSE in normalized target space, inference mode.
double validation_mse(const Model& model, const SampleSet& set, Split split = Split::Val);

struct TrainHooks {
  /// Replaces the default validation score (used to script loss sequences).
  std::function<double(std::size_t epoch, const Model&)> val_score;
  std::function<void(const EpochRecord&, const Model&)> on_epoch_end;
};

struct TrainResult {
  nn::Checkpoint best;  // weights at the best validation epoch
  TrainHistory history;
};

/// Mini-batch Adam on the train split with early stopping on the validation
/// MSE. Stops when `epoch - best_epoch >= patience` (ties do not improve) or
/// at `max_epochs`; on return `model` holds the best-epoch weights.
TrainResult train(Model& model, const SampleSet& set, const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace gwc
