#include "gwindcast/neural/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gwindcast/error.hpp"

namespace gwc::nn {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(Errc::ShapeMismatch, what);
}

}  // namespace

NodeId Graph::input(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad && record_, nullptr);
}

NodeId Graph::param(Param& p) {
  Node n;
  n.ref = &p.value;
  n.sink = record_ ? &p : nullptr;
  n.needs_grad = record_;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

NodeId Graph::param(const Param& p) {
  Node n;
  n.ref = &p.value;
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

const Tensor& Graph::value(NodeId id) const {
  const Node& n = nodes_[id.index];
  return n.ref ? *n.ref : n.value;
}

NodeId Graph::push(Tensor value, bool needs_grad, std::function<void(Graph&, std::size_t)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad && record_;
  if (n.needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {nodes_.size() - 1};
}

Tensor& Graph::grad_buffer(NodeId id) {
  Node& n = nodes_[id.index];
  if (n.grad.empty() && !value(id).empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

void Graph::backward(NodeId loss) {
  if (!record_) throw Error(Errc::GraphNotRecorded, "graph was built without recording");
  if (loss.index >= nodes_.size()) throw Error(Errc::GraphNotRecorded, "loss node not on this tape");
  if (backward_done_) throw Error(Errc::GraphNotRecorded, "backward already consumed this tape");
  if (value(loss).size() != 1) throw Error(Errc::ShapeMismatch, "loss must be a scalar");
  backward_done_ = true;
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.back) n.back(*this, i);
  }
  for (auto& n : nodes_) {
    if (!n.sink || n.grad.empty()) continue;
    auto& dst = n.sink->grad;
    if (dst.size() != n.grad.size()) dst = Tensor(n.sink->value.shape(), 0.0);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += n.grad[j];
  }
}

NodeId dense(Graph& g, NodeId x, NodeId w, NodeId b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require(wv.rank() == 2 && xv.rank() >= 1 && xv.cols() == wv.dim(0),
          "dense: x " + shape_string(xv.shape()) + " vs w " + shape_string(wv.shape()));
  require(bv.size() == wv.dim(1), "dense: bias " + shape_string(bv.shape()));
  const std::size_t rows = xv.rows(), in = wv.dim(0), out = wv.dim(1);
  Shape shape = xv.shape();
  shape.back() = out;
  Tensor y(shape);
  for (std::size_t r = 0; r < rows; ++r) std::copy(bv.ptr(), bv.ptr() + out, y.ptr() + r * out);
  gemm_nn(xv.ptr(), wv.ptr(), y.ptr(), rows, in, out);
  const bool ng = g.needs_grad(x) || g.needs_grad(w) || g.needs_grad(b);
  return g.push(std::move(y), ng, [x, w, b, rows, in, out](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad({self});
    if (g.needs_grad(x)) gemm_nt(dy.ptr(), g.value(w).ptr(), g.grad_buffer(x).ptr(), rows, out, in);
    if (g.needs_grad(w)) gemm_tn(g.value(x).ptr(), dy.ptr(), g.grad_buffer(w).ptr(), in, rows, out);
    if (g.needs_grad(b)) {
      double* db = g.grad_buffer(b).ptr();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < out; ++j) db[j] += dy[r * out + j];
    }
  });
}

NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.shape() == bv.shape(), "add: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return g.push(std::move(y), g.needs_grad(a) || g.needs_grad(b), [a, b](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad({self});
    for (NodeId n : {a, b}) {
      if (!g.needs_grad(n)) continue;
      Tensor& d = g.grad_buffer(n);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

NodeId add_constant(Graph& g, NodeId a, const Tensor& c) {
  const Tensor& av = g.value(a);
  require(c.size() > 0 && av.size() % c.size() == 0 && av.rank() >= c.rank() &&
              std::equal(c.shape().rbegin(), c.shape().rend(), av.shape().rbegin()),
          "add_constant: " + shape_string(av.shape()) + " vs " + shape_string(c.shape()));
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += c[i % c.size()];
  return g.push(std::move(y), g.needs_grad(a), [a](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad({self});
    Tensor& d = g.grad_buffer(a);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
  });
}

NodeId tanh(Graph& g, NodeId a) {
  Tensor y = g.value(a);
  for (auto& v : y.data()) v = std::tanh(v);
  return g.push(std::move(y), g.needs_grad(a), [a](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad({self});
    const Tensor& yv = g.value({self});
    Tensor& d = g.grad_buffer(a);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * (1.0 - yv[i] * yv[i]);
  });
}

NodeId reshape(Graph& g, NodeId a, Shape shape) {
  Tensor y = g.value(a).reshaped(std::move(shape));
  return g.push(std::move(y), g.needs_grad(a), [a](Graph& g, std::size_t self) {
    const Tensor& dy = g.grad({self});
    Tensor& d = g.grad_buffer(a);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
  });
}

namespace {

NodeId batch_norm_impl(Graph& g, NodeId x, NodeId gamma, NodeId beta, BatchNormState* train_state,
                       const BatchNormState& state) {
  const Tensor& xv = g.value(x);
  const Tensor& gv = g.value(gamma);
  const Tensor& bv = g.value(beta);
  const std::size_t f = xv.cols();
  const std::size_t rows = xv.rows();
  require(gv.size() == f && bv.size() == f, "batch_norm: affine params must have " + std::to_string(f) + " entries");
  require(state.running_mean.size() == f, "batch_norm: state width");

  Tensor y(xv.shape());
  if (!train_state) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        const double inv = 1.0 / std::sqrt(state.running_var[j] + state.eps);
        y[r * f + j] = gv[j] * (xv[r * f + j] - state.running_mean[j]) * inv + bv[j];
      }
    return g.push(std::move(y), g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta),
                  [x, gamma, beta, rows, f, st = state](Graph& g, std::size_t self) {
                    const Tensor& dy = g.grad({self});
                    const Tensor& xv = g.value(x);
                    const Tensor& gv = g.value(gamma);
                    for (std::size_t j = 0; j < f; ++j) {
                      const double inv = 1.0 / std::sqrt(st.running_var[j] + st.eps);
                      for (std::size_t r = 0; r < rows; ++r) {
                        const double d = dy[r * f + j];
                        if (g.needs_grad(x)) g.grad_buffer(x)[r * f + j] += d * gv[j] * inv;
                        if (g.needs_grad(gamma))
                          g.grad_buffer(gamma)[j] += d * (xv[r * f + j] - st.running_mean[j]) * inv;
                        if (g.needs_grad(beta)) g.grad_buffer(beta)[j] += d;
                      }
                    }
                  });
  }

  if (rows < 2) throw Error(Errc::BatchTooSmall, "training-mode batch_norm needs at least 2 rows");
  Tensor mean(Shape{f}, 0.0), var(Shape{f}, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) mean[j] += xv[r * f + j];
  for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const double d = xv[r * f + j] - mean[j];
      var[j] += d * d;
    }
  Tensor inv_std(Shape{f});
  for (std::size_t j = 0; j < f; ++j) {
    var[j] /= static_cast<double>(rows);
    inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
  }
  Tensor xhat(xv.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const double h = (xv[r * f + j] - mean[j]) * inv_std[j];
      xhat[r * f + j] = h;
      y[r * f + j] = gv[j] * h + bv[j];
    }
  const double m = train_state->momentum;
  for (std::size_t j = 0; j < f; ++j) {
    train_state->running_mean[j] = m * train_state->running_mean[j] + (1.0 - m) * mean[j];
    train_state->running_var[j] = m * train_state->running_var[j] + (1.0 - m) * var[j];
  }
  if (!g.recording()) {
    return g.push(std::move(y), false, nullptr);
  }
  return g.push(std::move(y), g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta),
                [x, gamma, beta, rows, f, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Graph& g, std::size_t self) {
                  const Tensor& dy = g.grad({self});
                  const Tensor& gv = g.value(gamma);
                  std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
                  for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < f; ++j) {
                      sum_dy[j] += dy[r * f + j];
                      sum_dy_xhat[j] += dy[r * f + j] * xhat[r * f + j];
                    }
                  if (g.needs_grad(gamma)) {
                    Tensor& dg = g.grad_buffer(gamma);
                    for (std::size_t j = 0; j < f; ++j) dg[j] += sum_dy_xhat[j];
                  }
                  if (g.needs_grad(beta)) {
                    Tensor& db = g.grad_buffer(beta);
                    for (std::size_t j = 0; j < f; ++j) db[j] += sum_dy[j];
                  }
                  if (g.needs_grad(x)) {
                    Tensor& dx = g.grad_buffer(x);
                    const double n = static_cast<double>(rows);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < f; ++j) {
                        const std::size_t i = r * f + j;
                        dx[i] += gv[j] * inv_std[j] / n *
                                 (n * dy[i] - sum_dy[j] - xhat[i] * sum_dy_xhat[j]);
                      }
                  }
                });
}

}  // namespace

NodeId batch_norm(Graph& g, NodeId x, NodeId gamma, NodeId beta, BatchNormState& state, bool training) {
  return batch_norm_impl(g, x, gamma, beta, training ? &state : nullptr, state);
}

NodeId batch_norm_inference(Graph& g, NodeId x, NodeId gamma, NodeId beta, const BatchNormState& state) {
  return batch_norm_impl(g, x, gamma, beta, nullptr, state);
}

NodeId attention(Graph& g, NodeId q, NodeId k, NodeId v, std::size_t heads, Tensor* probs) {
  const Tensor& qv = g.value(q);
  const Tensor& kv = g.value(k);
  const Tensor& vv = g.value(v);
  require(qv.rank() == 3 && kv.shape() == qv.shape() && vv.shape() == qv.shape(),
          "attention: q, k, v must share a [batch x t x d] shape");
  const std::size_t nb = qv.dim(0), nt = qv.dim(1), d = qv.dim(2);
  require(heads > 0 && d % heads == 0, "attention: width " + std::to_string(d) +
                                           " not divisible by " + std::to_string(heads) + " heads");
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out(qv.shape(), 0.0);
  Tensor p(Shape{nb, heads, nt, nt});
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t h = 0; h < heads; ++h) {
      double* ph = p.ptr() + ((b * heads + h) * nt) * nt;
      for (std::size_t i = 0; i < nt; ++i) {
        const double* qi = qv.ptr() + (b * nt + i) * d + h * dh;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < nt; ++j) {
          const double* kj = kv.ptr() + (b * nt + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= scale;
          ph[i * nt + j] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < nt; ++j) {
          ph[i * nt + j] = std::exp(ph[i * nt + j] - mx);
          z += ph[i * nt + j];
        }
        double* oi = out.ptr() + (b * nt + i) * d + h * dh;
        for (std::size_t j = 0; j < nt; ++j) {
          const double w = ph[i * nt + j] / z;
          ph[i * nt + j] = w;
          const double* vj = vv.ptr() + (b * nt + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
        }
      }
    }
  if (probs) *probs = p;
  const bool ng = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
  if (!ng || !g.recording()) return g.push(std::move(out), false, nullptr);
  return g.push(std::move(out), true,
                [q, k, v, nb, nt, d, dh, heads, scale, p = std::move(p)](Graph& g, std::size_t self) {
                  const Tensor& dout = g.grad({self});
                  const Tensor& qv = g.value(q);
                  const Tensor& kv = g.value(k);
                  const Tensor& vv = g.value(v);
                  double* dq = g.needs_grad(q) ? g.grad_buffer(q).ptr() : nullptr;
                  double* dk = g.needs_grad(k) ? g.grad_buffer(k).ptr() : nullptr;
                  double* dv = g.needs_grad(v) ? g.grad_buffer(v).ptr() : nullptr;
                  std::vector<double> ds(nt * nt);
                  for (std::size_t b = 0; b < nb; ++b)
                    for (std::size_t h = 0; h < heads; ++h) {
                      const double* ph = p.ptr() + ((b * heads + h) * nt) * nt;
                      auto at = [&](std::size_t t) { return (b * nt + t) * d + h * dh; };
                      for (std::size_t i = 0; i < nt; ++i) {
                        const double* doi = dout.ptr() + at(i);
                        double row = 0.0;
                        for (std::size_t j = 0; j < nt; ++j) {
                          const double* vj = vv.ptr() + at(j);
                          double dp = 0.0;
                          for (std::size_t c = 0; c < dh; ++c) dp += doi[c] * vj[c];
                          ds[i * nt + j] = dp;
                          row += dp * ph[i * nt + j];
                        }
                        for (std::size_t j = 0; j < nt; ++j)
                          ds[i * nt + j] = ph[i * nt + j] * (ds[i * nt + j] - row);
                      }
                      for (std::size_t i = 0; i < nt; ++i)
                        for (std::size_t j = 0; j < nt; ++j) {
                          const double s = ds[i * nt + j] * scale;
                          const double w = ph[i * nt + j];
                          for (std::size_t c = 0; c < dh; ++c) {
                            if (dq) dq[at(i) + c] += s * kv[at(j) + c];
                            if (dk) dk[at(j) + c] += s * qv[at(i) + c];
                            if (dv) dv[at(j) + c] += w * dout[at(i) + c];
                          }
                        }
                    }
                });
}

NodeId mse_loss(Graph& g, NodeId pred, const Tensor& target) {
  const Tensor& pv = g.value(pred);
  require(pv.shape() == target.shape(),
          "mse_loss: " + shape_string(pv.shape()) + " vs " + shape_string(target.shape()));
  require(pv.size() > 0, "mse_loss: empty prediction");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double e = pv[i] - target[i];
    acc += e * e;
  }
  const double n = static_cast<double>(pv.size());
  Tensor y(Shape{1}, acc / n);
  if (!g.needs_grad(pred)) return g.push(std::move(y), false, nullptr);
  return g.push(std::move(y), true, [pred, target, n](Graph& g, std::size_t self) {
    const double up = g.grad({self})[0];
    const Tensor& pv = g.value(pred);
    Tensor& d = g.grad_buffer(pred);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += up * 2.0 * (pv[i] - target[i]) / n;
  });
}

MseResult mse(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(),
          "mse: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  require(pred.size() > 0, "mse: empty input");
  MseResult r;
  r.grad = Tensor(pred.shape());
  const double n = static_cast<double>(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    acc += e * e;
    r.grad[i] = 2.0 * e / n;
  }
  r.loss = acc / n;
  return r;
}

Tensor positional_embedding(std::size_t t_steps, std::size_t width) {
  if (width % 2 != 0) throw Error(Errc::OddWidth, "positional width " + std::to_string(width) + " is odd");
  Tensor pe(Shape{t_steps, width});
  for (std::size_t pos = 0; pos < t_steps; ++pos)
    for (std::size_t i = 0; i < width / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(width));
      pe[pos * width + 2 * i] = std::sin(angle);
      pe[pos * width + 2 * i + 1] = std::cos(angle);
    }
  return pe;
}

}  // namespace gwc::nn
