#pragma once

// Reverse-mode differentiation over a recorded tape of the layer set the
// encoder needs. Nodes are appended in evaluation order, so walking the tape
// backwards is a valid topological order.

#include <cstddef>
#include <functional>
#include <vector>

#include "gwindcast/neural/tensor.hpp"

namespace gwc::nn {

struct NodeId {
  std::size_t index = 0;
};

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.9;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t features = 0)
      : running_mean(Shape{features}, 0.0), running_var(Shape{features}, 1.0) {}
};

class Graph {
 public:
  /// With `record == false` no backward closures are kept (inference).
  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }

  NodeId input(Tensor value, bool requires_grad = false);
  /// Parameter leaf; gradients are accumulated into `p.grad` on backward.
  NodeId param(Param& p);
  /// Parameter leaf that never receives gradients.
  NodeId param(const Param& p);

  const Tensor& value(NodeId id) const;
  /// Gradient of the last backward's loss w.r.t. the node (empty if none reached it).
  const Tensor& grad(NodeId id) const { return nodes_[id.index].grad; }
  bool needs_grad(NodeId id) const { return nodes_[id.index].needs_grad; }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node,
  /// then accumulates into bound Param gradients.
  void backward(NodeId loss);

  // Node construction hooks for the op implementations below.
  NodeId push(Tensor value, bool needs_grad, std::function<void(Graph&, std::size_t)> back);
  Tensor& grad_buffer(NodeId id);

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;  // parameter leaves view the Param's value
    Tensor grad;
    Param* sink = nullptr;
    bool needs_grad = false;
    std::function<void(Graph&, std::size_t)> back;
  };
  std::vector<Node> nodes_;
  bool record_;
  bool backward_done_ = false;
};

/// x [..., in] * w [in x out] + b [out] -> [..., out]
NodeId dense(Graph& g, NodeId x, NodeId w, NodeId b);
NodeId add(Graph& g, NodeId a, NodeId b);
/// a [..., r x c] + c broadcast over leading dimensions (c has shape [r x c]).
NodeId add_constant(Graph& g, NodeId a, const Tensor& c);
NodeId tanh(Graph& g, NodeId a);
NodeId reshape(Graph& g, NodeId a, Shape shape);
/// Per-feature normalization over all leading dimensions of x [..., F].
/// Training mode uses batch statistics and updates `state`; otherwise the
/// running statistics are used and `state` is left untouched.
NodeId batch_norm(Graph& g, NodeId x, NodeId gamma, NodeId beta, BatchNormState& state, bool training);
NodeId batch_norm_inference(Graph& g, NodeId x, NodeId gamma, NodeId beta, const BatchNormState& state);
/// Scaled dot-product attention per head on q, k, v [batch x t x d]:
/// softmax(Q K^T / sqrt(d / heads)) V, heads concatenated along d.
/// `probs` (optional) receives the [batch x heads x t x t] weights.
NodeId attention(Graph& g, NodeId q, NodeId k, NodeId v, std::size_t heads, Tensor* probs = nullptr);
/// Scalar mean squared error against a constant target.
NodeId mse_loss(Graph& g, NodeId pred, const Tensor& target);

struct MseResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d pred
};
MseResult mse(const Tensor& pred, const Tensor& target);

/// Sinusoidal encoding, PE(p, 2i) = sin(p / 10000^(2i/d)), PE(p, 2i+1) = cos(...).
Tensor positional_embedding(std::size_t t_steps, std::size_t width);

}  // namespace gwc::nn
