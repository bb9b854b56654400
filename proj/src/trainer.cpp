#include "gwindcast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gwindcast/error.hpp"
#include "gwindcast/io.hpp"
#include "gwindcast/rng.hpp"

namespace gwc {

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0)) fail("beta1 must lie in (0, 1)");
  if (!(c.beta2 > 0.0 && c.beta2 < 1.0)) fail("beta2 must lie in (0, 1)");
  if (!(c.eps > 0.0)) fail("eps must be positive");
  if (!(c.lr > 0.0)) fail("lr must be positive");
  if (c.max_epochs < 1) fail("max_epochs must be >= 1");
  if (c.patience < 1 || c.patience > c.max_epochs) fail("patience must lie in [1, max_epochs]");
  if (c.batch_size < 1) fail("batch_size must be >= 1");
}

void adam_step(std::span<nn::Param> params, AdamState& st, const TrainConfig& cfg) {
  for (const auto& p : params) {
    for (double g : p.grad.data()) {
      if (!std::isfinite(g)) throw Error(Errc::NonFiniteGradient, "parameter '" + p.name + "'");
    }
  }
  if (st.m.size() != params.size()) {
    st.m.clear();
    st.v.clear();
    for (const auto& p : params) {
      st.m.emplace_back(p.value.shape(), 0.0);
      st.v.emplace_back(p.value.shape(), 0.0);
    }
  }
  st.t += 1;
  const double t = static_cast<double>(st.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = st.m[i];
    auto& v = st.v[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p.value[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    p.zero_grad();
  }
}

std::string history_to_csv(const TrainHistory& h) {
  std::string out = "epoch,train_mse,val_mse\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + "," + io::fmt9(e.train_mse) + "," + io::fmt9(e.val_mse) + "\n";
  }
  return out;
}

double validation_mse(const Model& model, const SampleSet& set, Split split) {
  const auto idx = set.indices(split);
  if (idx.empty()) throw Error(Errc::EmptySplit, std::string(to_string(split)) + " split is empty");
  const auto& cfg = model.config();
  const std::size_t width = cfg.width();
  const std::size_t chunk = 256;
  double sse = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    const auto part = std::span<const std::size_t>(idx).subspan(start, std::min(chunk, idx.size() - start));
    const Batch b = make_batch(set, part, width);
    const nn::Tensor y = model.predict(b.x);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = y[i] - b.y[i];
      sse += e * e;
    }
  }
  return sse / static_cast<double>(idx.size() * set.output_dim());
}

TrainResult train(Model& model, const SampleSet& set, const TrainConfig& cfg, const TrainHooks& hooks) {
  validate(cfg);
  auto train_idx = set.indices(Split::Train);
  if (train_idx.empty()) throw Error(Errc::EmptySplit, "train split is empty");
  if (!hooks.val_score && set.indices(Split::Val).empty()) throw Error(Errc::EmptySplit, "val split is empty");
  if (!set.normalized()) throw Error(Errc::UnnormalizedInput, "sample set carries no normalization statistics");

  const auto& mcfg = model.config();
  const std::size_t width = mcfg.width();
  Rng rng(cfg.seed);
  AdamState adam;
  TrainResult result;
  auto& hist = result.history;
  double best = INFINITY;

  for (auto& p : model.params()) p.zero_grad();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(train_idx));
    // A trailing single-sample batch is merged into the previous one.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < train_idx.size(); s += cfg.batch_size) {
      batches.emplace_back(s, std::min(cfg.batch_size, train_idx.size() - s));
    }
    if (batches.size() > 1 && batches.back().second == 1) {
      batches[batches.size() - 2].second += 1;
      batches.pop_back();
    }

    double loss_sum = 0.0;
    for (const auto& [start, len] : batches) {
      const auto part = std::span<const std::size_t>(train_idx).subspan(start, len);
      const Batch b = make_batch(set, part, width);
      nn::Graph g;
      const nn::NodeId out = model.forward(g, g.input(b.x), /*training=*/true);
      const nn::NodeId loss = nn::mse_loss(g, out, b.y);
      const double lv = g.value(loss)[0];
      if (!std::isfinite(lv)) throw Error(Errc::NonFiniteLoss, "epoch " + std::to_string(epoch));
      g.backward(loss);
      adam_step(model.params(), adam, cfg);
      loss_sum += lv * static_cast<double>(len);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(train_idx.size());
    rec.val_mse = hooks.val_score ? hooks.val_score(epoch, model) : validation_mse(model, set);
    if (!std::isfinite(rec.val_mse)) throw Error(Errc::NonFiniteLoss, "validation loss at epoch " + std::to_string(epoch));
    hist.epochs.push_back(rec);
    if (rec.val_mse < best) {
      best = rec.val_mse;
      hist.best_epoch = epoch;
      hist.best_val_mse = rec.val_mse;
      result.best = model.checkpoint();
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(rec, model);
    if (epoch - hist.best_epoch >= cfg.patience) {
      hist.early_stopped = epoch < cfg.max_epochs;
      break;
    }
  }
  model.load(result.best);
  return result;
}

}  // namespace gwc
