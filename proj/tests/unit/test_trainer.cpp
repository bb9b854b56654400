#include <doctest.h>

#include <cmath>

#include "gwindcast/error.hpp"
#include "gwindcast/trainer.hpp"
#include "testing.hpp"

using namespace gwc;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidConfig;
}

nn::Param scalar(double v) { return nn::Param("theta", nn::Tensor({1}, {v})); }

/// Scalar Adam written from the update equations, with running powers.
struct ScalarAdam {
  double lr, b1, b2, eps;
  double m = 0.0, v = 0.0, p1 = 1.0, p2 = 1.0;
  double step(double theta, double g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    p1 *= b1;
    p2 *= b2;
    return theta - lr * (m / (1.0 - p1)) / (std::sqrt(v / (1.0 - p2)) + eps);
  }
};

SampleSet linear_samples(std::uint64_t seed = 21) {
  SynthConfig c = testing::small_synth(seed);
  c.noise_std = 0.0;
  c.missing_rate = 0.0;
  c.nonlinearity = 0.0;
  return testing::synth_samples(c);
}

}  // namespace

// ---------------------------------------------------------------- adam

TEST_CASE("adam first step by hand") {
  std::vector<nn::Param> ps{scalar(1.0)};
  ps[0].grad[0] = 2.0;
  AdamState st;
  const TrainConfig cfg{.lr = 0.001};
  adam_step(ps, st, cfg);
  CHECK(st.t == 1);
  CHECK(st.m[0][0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(st.v[0][0] == doctest::Approx(0.004).epsilon(1e-15));
  CHECK(st.m[0][0] / (1.0 - 0.9) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(st.v[0][0] / (1.0 - 0.999) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(ps[0].value[0] - (1.0 - 0.001 * 2.0 / (2.0 + 1e-8))) < 1e-15);
  CHECK(std::abs(ps[0].value[0] - 0.999) < 1e-8);
  CHECK(ps[0].grad[0] == 0.0);
}

TEST_CASE("adam matches a scalar oracle over ten steps") {
  std::vector<nn::Param> ps{scalar(1.0)};
  AdamState st;
  const TrainConfig cfg{.lr = 0.001};
  ScalarAdam oracle{0.001, 0.9, 0.999, 1e-8};
  double theta = 1.0;
  for (int k = 0; k < 10; ++k) {
    ps[0].grad[0] = 2.0;
    adam_step(ps, st, cfg);
    theta = oracle.step(theta, 2.0);
    CHECK(std::abs(ps[0].value[0] - theta) <= 1e-15);
  }
}

TEST_CASE("adam with varying gradients matches the oracle (property)") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const TrainConfig cfg{.lr = rng.uniform(1e-4, 1e-1), .beta1 = rng.uniform(0.5, 0.99), .beta2 = rng.uniform(0.9, 0.9999)};
    ScalarAdam oracle{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
    std::vector<nn::Param> ps{scalar(rng.normal())};
    double theta = ps[0].value[0];
    AdamState st;
    for (int k = 0; k < 25; ++k) {
      const double g = rng.normal();
      ps[0].grad[0] = g;
      adam_step(ps, st, cfg);
      theta = oracle.step(theta, g);
      CHECK(std::abs(ps[0].value[0] - theta) <= 1e-12 * std::max(1.0, std::abs(theta)));
      CHECK(st.v[0][0] >= 0.0);
    }
  }
}

TEST_CASE("zero gradient leaves theta and decays the first moment") {
  std::vector<nn::Param> ps{scalar(1.5)};
  AdamState st;
  const TrainConfig cfg{.lr = 0.01};
  adam_step(ps, st, cfg);
  CHECK(ps[0].value[0] == 1.5);
  ps[0].grad[0] = 2.0;
  adam_step(ps, st, cfg);
  const double m1 = st.m[0][0];
  for (int k = 0; k < 3; ++k) {
    const double before = st.m[0][0];
    adam_step(ps, st, cfg);
    CHECK(st.m[0][0] == doctest::Approx(0.9 * before).epsilon(1e-15));
  }
  CHECK(st.m[0][0] < m1);
}

TEST_CASE("adam without moment decay is normalized gradient descent") {
  Rng rng(32);
  for (int k = 0; k < 50; ++k) {
    const double g = rng.uniform(-10, 10), theta0 = rng.normal();
    std::vector<nn::Param> ps{scalar(theta0)};
    ps[0].grad[0] = g;
    AdamState st;
    adam_step(ps, st, {.lr = 0.01, .beta1 = 0.0, .beta2 = 0.0, .eps = 0.0});
    CHECK(ps[0].value[0] == doctest::Approx(theta0 - 0.01 * g / std::abs(g)).epsilon(1e-15));
  }
}

TEST_CASE("non-finite gradients abort before any update") {
  std::vector<nn::Param> ps{scalar(1.0), nn::Param("head.w", nn::Tensor({2}, {1.0, 2.0}))};
  ps[0].grad[0] = 1.0;
  ps[1].grad[1] = NAN;
  AdamState st;
  try {
    adam_step(ps, st, {});
    FAIL("expected NonFiniteGradient");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteGradient);
    CHECK(std::string(e.what()).find("head.w") != std::string::npos);
  }
  CHECK(st.t == 0);
  CHECK(ps[0].value[0] == 1.0);
}

TEST_CASE("train config validation") {
  CHECK_NOTHROW(validate(TrainConfig{}));
  CHECK(code_of([] { validate(TrainConfig{.beta1 = 1.0}); }) == Errc::InvalidConfig);
  CHECK(code_of([] { validate(TrainConfig{.beta2 = 0.0}); }) == Errc::InvalidConfig);
  CHECK(code_of([] { validate(TrainConfig{.eps = 0.0}); }) == Errc::InvalidConfig);
  CHECK(code_of([] { validate(TrainConfig{.max_epochs = 10, .patience = 11}); }) == Errc::InvalidConfig);
  CHECK(code_of([] { validate(TrainConfig{.batch_size = 0}); }) == Errc::InvalidConfig);
}

// ---------------------------------------------------------------- train

TEST_CASE("scripted validation losses stop at the traced epoch") {
  const SampleSet set = linear_samples();
  Model m(testing::model_config_for(set, Arch::Mlp));
  const std::vector<double> script{5, 4, 4.5, 4.2, 3, 2, 1};
  std::vector<nn::Checkpoint> snapshots;
  TrainHooks hooks;
  hooks.val_score = [&](std::size_t epoch, const Model&) { return script[epoch - 1]; };
  hooks.on_epoch_end = [&](const EpochRecord&, const Model& model) { snapshots.push_back(model.checkpoint()); };
  const TrainResult r = train(m, set, {.lr = 1e-3, .max_epochs = 7, .patience = 2, .seed = 1}, hooks);
  CHECK(r.history.epochs.size() == 4);
  CHECK(r.history.best_epoch == 2);
  CHECK(r.history.best_val_mse == 4.0);
  CHECK(r.history.early_stopped);
  REQUIRE(snapshots.size() == 4);
  CHECK(r.best == snapshots[1]);
  CHECK(m.checkpoint() == snapshots[1]);
  CHECK(snapshots[1] != snapshots[3]);
}

TEST_CASE("ties do not count as improvement") {
  const SampleSet set = linear_samples();
  Model m(testing::model_config_for(set, Arch::Mlp));
  const std::vector<double> script{3, 2, 2, 2, 1};
  TrainHooks hooks;
  hooks.val_score = [&](std::size_t epoch, const Model&) { return script[epoch - 1]; };
  const TrainResult r = train(m, set, {.lr = 1e-3, .max_epochs = 5, .patience = 2}, hooks);
  CHECK(r.history.epochs.size() == 4);
  CHECK(r.history.best_epoch == 2);
}

TEST_CASE("patience equal to max epochs never stops early") {
  const SampleSet set = linear_samples();
  Model m(testing::model_config_for(set, Arch::Mlp));
  const std::vector<double> script{5, 2, 1, 3, 4, 6};
  std::vector<nn::Checkpoint> snapshots;
  TrainHooks hooks;
  hooks.val_score = [&](std::size_t epoch, const Model&) { return script[epoch - 1]; };
  hooks.on_epoch_end = [&](const EpochRecord&, const Model& model) { snapshots.push_back(model.checkpoint()); };
  const TrainResult r = train(m, set, {.lr = 1e-3, .max_epochs = 6, .patience = 6}, hooks);
  CHECK(r.history.epochs.size() == 6);
  CHECK_FALSE(r.history.early_stopped);
  CHECK(r.history.best_epoch == 3);
  CHECK(m.checkpoint() == snapshots[2]);
}

TEST_CASE("restored weights reproduce the best validation loss") {
  const SampleSet set = linear_samples();
  Model m(testing::model_config_for(set));
  const TrainResult r = train(m, set, {.lr = 1e-3, .max_epochs = 12, .patience = 3, .seed = 2});
  CHECK(validation_mse(m, set) == r.history.best_val_mse);
  CHECK(r.history.epochs[r.history.best_epoch - 1].val_mse == r.history.best_val_mse);
}

TEST_CASE("training is deterministic") {
  const SampleSet set = linear_samples();
  auto run = [&] {
    Model m(testing::model_config_for(set));
    return train(m, set, {.lr = 1e-3, .max_epochs = 5, .patience = 5, .seed = 9});
  };
  const TrainResult a = run(), b = run();
  CHECK(history_to_csv(a.history) == history_to_csv(b.history));
  CHECK(a.best == b.best);
  for (std::size_t i = 0; i < a.history.epochs.size(); ++i) {
    CHECK(a.history.epochs[i].train_mse == b.history.epochs[i].train_mse);
    CHECK(a.history.epochs[i].val_mse == b.history.epochs[i].val_mse);
  }
  Model m(testing::model_config_for(set));
  const TrainResult c = train(m, set, {.lr = 1e-3, .max_epochs = 5, .patience = 5, .seed = 10});
  CHECK(c.best != a.best);
}

TEST_CASE("MLP training loss decreases monotonically on noiseless linear data") {
  const SampleSet set = linear_samples();
  const std::size_t full_batch = set.indices(Split::Train).size();
  for (double lr : {1e-4, 3e-4, 1e-3}) {
    Model m(testing::model_config_for(set, Arch::Mlp));
    const TrainResult r = train(m, set, {.lr = lr, .max_epochs = 50, .patience = 50, .batch_size = full_batch, .seed = 3});
    REQUIRE(r.history.epochs.size() == 50);
    for (std::size_t e = 1; e < 50; ++e) CHECK(r.history.epochs[e].train_mse < r.history.epochs[e - 1].train_mse);
  }
}

TEST_CASE("training preconditions") {
  SampleSet set = linear_samples();
  Model m(testing::model_config_for(set, Arch::Mlp));
  SampleSet no_val = set;
  for (auto& s : no_val.split_labels)
    if (s == Split::Val) s = Split::Train;
  CHECK(code_of([&] { train(m, no_val, {.max_epochs = 1, .patience = 1}); }) == Errc::EmptySplit);
  SampleSet no_train = set;
  for (auto& s : no_train.split_labels) s = Split::Val;
  CHECK(code_of([&] { train(m, no_train, {.max_epochs = 1, .patience = 1}); }) == Errc::EmptySplit);
  CHECK(code_of([&] { train(m, set, {.max_epochs = 1, .patience = 2}); }) == Errc::InvalidConfig);
  TrainHooks nan_val;
  nan_val.val_score = [](std::size_t, const Model&) { return NAN; };
  CHECK(code_of([&] { train(m, set, {.max_epochs = 1, .patience = 1}, nan_val); }) == Errc::NonFiniteLoss);
  set.input_stats.reset();
  CHECK(code_of([&] { train(m, set, {.max_epochs = 1, .patience = 1}); }) == Errc::UnnormalizedInput);
}

TEST_CASE("history CSV") {
  TrainHistory h;
  h.epochs = {{1, 0.5, 0.25}, {2, 0.125, 1.0 / 3.0}};
  CHECK(history_to_csv(h) == "epoch,train_mse,val_mse\n1,0.5,0.25\n2,0.125,0.333333333\n");
}
