#include "gwindcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <type_traits>

#include "gwindcast/error.hpp"

namespace gwc {

using nlohmann::json;
using nn::Graph;
using nn::NodeId;
using nn::Shape;
using nn::Tensor;

std::string_view to_string(Arch a) noexcept { return a == Arch::Transformer ? "transformer" : "mlp"; }

Arch arch_from_string(std::string_view s) {
  if (s == "transformer") return Arch::Transformer;
  if (s == "mlp") return Arch::Mlp;
  throw Error(Errc::InvalidConfig, "unknown arch '" + std::string(s) + "'");
}

std::size_t ModelConfig::width() const noexcept {
  if (arch == Arch::Mlp) return n_stations;
  const std::size_t h = std::max<std::size_t>(heads, 1);
  const std::size_t m = std::lcm(std::size_t{2}, h);
  return (n_stations + m - 1) / m * m;
}

json to_json(const ModelConfig& c) {
  return {{"arch", to_string(c.arch)},       {"window_steps", c.window_steps},
          {"n_stations", c.n_stations},      {"encoder_blocks", c.encoder_blocks},
          {"heads", c.heads},                {"output_dim", c.output_dim},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.arch = arch_from_string(j.at("arch").get<std::string>());
  c.window_steps = j.at("window_steps").get<std::size_t>();
  c.n_stations = j.at("n_stations").get<std::size_t>();
  c.encoder_blocks = j.at("encoder_blocks").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.output_dim = j.at("output_dim").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t o = c.output_dim;
  if (c.arch == Arch::Mlp) {
    const std::size_t h = c.hidden();
    return 2 * (h * h + h) + h * o + o;
  }
  const std::size_t d = c.width();
  return c.encoder_blocks * (5 * d * d + 9 * d) + c.window_steps * d * o + o;
}

std::size_t Model::add_glorot(std::string name, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(Shape{fan_in, fan_out});
  for (auto& v : t.data()) v = rng.uniform(-limit, limit);
  params_.emplace_back(std::move(name), std::move(t));
  return params_.size() - 1;
}

std::size_t Model::add_filled(std::string name, Shape shape, double fill) {
  params_.emplace_back(std::move(name), Tensor(std::move(shape), fill));
  return params_.size() - 1;
}

Model::Model(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.window_steps < 1 || cfg.n_stations < 1 || cfg.output_dim < 1) {
    throw Error(Errc::InvalidConfig, "window_steps, n_stations and output_dim must be >= 1");
  }
  if (cfg.arch == Arch::Transformer && cfg.heads < 1) throw Error(Errc::InvalidConfig, "heads must be >= 1");
  Rng rng(cfg.seed);
  const std::size_t w = cfg.window_steps;
  if (cfg.arch == Arch::Transformer) {
    const std::size_t d = cfg.width();
    pe_ = nn::positional_embedding(w, d);
    for (std::size_t i = 0; i < cfg.encoder_blocks; ++i) {
      const std::string p = "enc" + std::to_string(i) + ".";
      Block b{};
      b.wq = add_glorot(p + "attn.wq", d, d, rng);
      b.bq = add_filled(p + "attn.bq", {d}, 0.0);
      b.wk = add_glorot(p + "attn.wk", d, d, rng);
      b.bk = add_filled(p + "attn.bk", {d}, 0.0);
      b.wv = add_glorot(p + "attn.wv", d, d, rng);
      b.bv = add_filled(p + "attn.bv", {d}, 0.0);
      b.wo = add_glorot(p + "attn.wo", d, d, rng);
      b.bo = add_filled(p + "attn.bo", {d}, 0.0);
      b.bn1_gamma = add_filled(p + "bn1.gamma", {d}, 1.0);
      b.bn1_beta = add_filled(p + "bn1.beta", {d}, 0.0);
      b.ffn_w = add_glorot(p + "ffn.w", d, d, rng);
      b.ffn_b = add_filled(p + "ffn.b", {d}, 0.0);
      b.bn2_gamma = add_filled(p + "bn2.gamma", {d}, 1.0);
      b.bn2_beta = add_filled(p + "bn2.beta", {d}, 0.0);
      blocks_.push_back(b);
      bn_.emplace_back(d);
      bn_.emplace_back(d);
    }
    head_w_ = add_glorot("head.w", w * d, cfg.output_dim, rng);
    head_b_ = add_filled("head.b", {cfg.output_dim}, 0.0);
  } else {
    const std::size_t h = cfg.hidden();
    for (int i = 0; i < 2; ++i) {
      const std::string p = "mlp.fc" + std::to_string(i + 1) + ".";
      mlp_.push_back(add_glorot(p + "w", h, h, rng));
      mlp_.push_back(add_filled(p + "b", {h}, 0.0));
    }
    head_w_ = add_glorot("head.w", h, cfg.output_dim, rng);
    head_b_ = add_filled("head.b", {cfg.output_dim}, 0.0);
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class Self>
NodeId Model::forward_impl(Self& self, Graph& g, NodeId x, bool training) {
  const auto& cfg = self.cfg_;
  const Tensor& xv = g.value(x);
  const std::size_t in_width = cfg.width();
  if (xv.rank() != 3 || xv.dim(1) != cfg.window_steps || xv.dim(2) != in_width) {
    throw Error(Errc::ShapeMismatch, "model input " + nn::shape_string(xv.shape()) + ", expected [batch x " +
                                         std::to_string(cfg.window_steps) + " x " + std::to_string(in_width) + "]");
  }
  const std::size_t batch = xv.dim(0);
  auto P = [&](std::size_t i) { return g.param(self.params_[i]); };

  if (cfg.arch == Arch::Mlp) {
    NodeId h = nn::reshape(g, x, {batch, cfg.hidden()});
    for (std::size_t i = 0; i < self.mlp_.size(); i += 2) {
      h = nn::tanh(g, nn::dense(g, h, P(self.mlp_[i]), P(self.mlp_[i + 1])));
    }
    return nn::dense(g, h, P(self.head_w_), P(self.head_b_));
  }

  const std::size_t d = cfg.width();
  auto norm = [&](NodeId in, std::size_t gamma, std::size_t beta, std::size_t state) {
    if constexpr (std::is_const_v<Self>) {
      return nn::batch_norm_inference(g, in, P(gamma), P(beta), self.bn_[state]);
    } else {
      return nn::batch_norm(g, in, P(gamma), P(beta), self.bn_[state], training);
    }
  };

  NodeId h = nn::add_constant(g, x, self.pe_);
  for (std::size_t i = 0; i < self.blocks_.size(); ++i) {
    const auto& b = self.blocks_[i];
    const NodeId q = nn::dense(g, h, P(b.wq), P(b.bq));
    const NodeId k = nn::dense(g, h, P(b.wk), P(b.bk));
    const NodeId v = nn::dense(g, h, P(b.wv), P(b.bv));
    const NodeId a = nn::dense(g, nn::attention(g, q, k, v, cfg.heads), P(b.wo), P(b.bo));
    h = norm(nn::add(g, h, a), b.bn1_gamma, b.bn1_beta, 2 * i);
    const NodeId f = nn::tanh(g, nn::dense(g, h, P(b.ffn_w), P(b.ffn_b)));
    h = norm(nn::add(g, h, f), b.bn2_gamma, b.bn2_beta, 2 * i + 1);
  }
  h = nn::reshape(g, h, {batch, cfg.window_steps * d});
  return nn::dense(g, h, P(self.head_w_), P(self.head_b_));
}

NodeId Model::forward(Graph& g, NodeId x, bool training) { return forward_impl(*this, g, x, training); }

NodeId Model::forward(Graph& g, NodeId x) const { return forward_impl(*this, g, x, false); }

Tensor Model::predict(const Tensor& x) const {
  Graph g(false);
  const NodeId out = forward(g, g.input(x));
  return g.value(out);
}

nn::Checkpoint Model::checkpoint() const {
  std::vector<nn::NamedTensor> tensors;
  for (const auto& p : params_) tensors.push_back({p.name, "param", p.value});
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i / 2) + ".bn" + std::to_string(i % 2 + 1) + ".";
    tensors.push_back({p + "running_mean", "buffer", bn_[i].running_mean});
    tensors.push_back({p + "running_var", "buffer", bn_[i].running_var});
  }
  return nn::encode_checkpoint(tensors, {{"model_config", to_json(cfg_)}});
}

void Model::load(const nn::Checkpoint& ckpt) {
  json header;
  const auto tensors = nn::decode_checkpoint(ckpt, &header);
  if (!header.contains("model_config")) throw Error(Errc::ParseError, "checkpoint has no model_config");
  const ModelConfig stored = model_config_from_json(header.at("model_config"));
  if (!(stored == cfg_)) {
    throw Error(Errc::ConfigMismatch, "checkpoint config " + to_json(stored).dump() + " != model config " +
                                          to_json(cfg_).dump());
  }
  const std::size_t expected = params_.size() + 2 * bn_.size();
  if (tensors.size() != expected) throw Error(Errc::ConfigMismatch, "checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (tensors[i].name != params_[i].name || tensors[i].value.shape() != params_[i].value.shape()) {
      throw Error(Errc::ConfigMismatch, "unexpected tensor '" + tensors[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = tensors[i].value;
  for (std::size_t i = 0; i < bn_.size(); ++i) {
    bn_[i].running_mean = tensors[params_.size() + 2 * i].value;
    bn_[i].running_var = tensors[params_.size() + 2 * i + 1].value;
  }
}

Batch make_batch(const SampleSet& set, std::span<const std::size_t> indices, std::size_t width) {
  if (!set.normalized()) throw Error(Errc::UnnormalizedInput, "sample set carries no normalization statistics");
  const std::size_t w = set.window_steps, s = set.n_features(), o = set.output_dim();
  if (width < s) throw Error(Errc::ShapeMismatch, "model width smaller than station count");
  Batch b{Tensor(Shape{indices.size(), w, width}, 0.0), Tensor(Shape{indices.size(), o})};
  const auto& is = *set.input_stats;
  const auto& ts = *set.target_stats;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    for (std::size_t t = 0; t < w; ++t) {
      const double* src = &set.inputs[i * set.input_stride() + t * s];
      double* dst = b.x.ptr() + (r * w + t) * width;
      for (std::size_t j = 0; j < s; ++j) dst[j] = (src[j] - is.mean[j]) / is.std[j];
    }
    for (std::size_t j = 0; j < o; ++j) b.y[r * o + j] = (set.targets[i * o + j] - ts.mean[j]) / ts.std[j];
  }
  return b;
}

Tensor predict_outputs(const Model& model, const SampleSet& set, std::span<const std::size_t> indices,
                       std::size_t chunk) {
  if (!set.normalized()) throw Error(Errc::UnnormalizedInput, "sample set carries no normalization statistics");
  const std::size_t o = set.output_dim();
  if (model.config().output_dim != o) throw Error(Errc::ShapeMismatch, "model output_dim differs from sample set");
  const std::size_t width = model.config().width();
  Tensor out(Shape{indices.size(), o});
  const auto& ts = *set.target_stats;
  chunk = std::max<std::size_t>(chunk, 1);
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const auto part = indices.subspan(start, std::min(chunk, indices.size() - start));
    const Batch b = make_batch(set, part, width);
    const Tensor y = model.predict(b.x);
    for (std::size_t r = 0; r < part.size(); ++r)
      for (std::size_t j = 0; j < o; ++j) out[(start + r) * o + j] = y[r * o + j] * ts.std[j] + ts.mean[j];
  }
  return out;
}

WindCube rows_to_cube(const SampleSet& set, std::span<const std::size_t> indices, const Tensor& rows) {
  const std::size_t o = set.output_dim();
  if (rows.size() != indices.size() * o) throw Error(Errc::ShapeMismatch, "rows do not match sample count");
  const auto [lo, hi] = std::minmax_element(set.target_times.begin(), set.target_times.end());
  TimeAxis axis{*lo, set.step, static_cast<std::size_t>((*hi - *lo) / set.step + 1)};
  WindCube cube = WindCube::empty_like(axis, set.levels, set.target_stations);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t t = *axis.index_of(set.target_times[indices[r]]);
    std::copy(rows.ptr() + r * o, rows.ptr() + (r + 1) * o, cube.values.begin() + static_cast<std::ptrdiff_t>(t * o));
    std::fill_n(cube.mask.begin() + static_cast<std::ptrdiff_t>(t * o), o, std::uint8_t{1});
  }
  return cube;
}

WindCube predict_denormalized(const Model& model, const SampleSet& set, Split split) {
  const auto idx = set.indices(split);
  if (idx.empty()) throw Error(Errc::SplitEmpty, std::string(to_string(split)) + " split has no samples");
  return rows_to_cube(set, idx, predict_outputs(model, set, idx));
}

WindCube truth_cube(const SampleSet& set, Split split) {
  const auto idx = set.indices(split);
  if (idx.empty()) throw Error(Errc::SplitEmpty, std::string(to_string(split)) + " split has no samples");
  const std::size_t o = set.output_dim();
  Tensor rows(Shape{idx.size(), o});
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(&set.targets[idx[r] * o], o, rows.ptr() + r * o);
  return rows_to_cube(set, idx, rows);
}

}  // namespace gwc
