#pragma once

#include "dygraph/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

/// Minimal reverse-mode automatic differentiation over dense double tensors.
///
/// Every op evaluates eagerly and records a closure that maps the output
/// gradient onto its inputs. Calling backward() on a scalar replays the
/// closures in reverse topological order. Nodes that do not depend on any
/// parameter carry no closure, so constant inputs cost nothing on the way back.
namespace dygraph::ad {

struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    bool requires_grad = false;

    /// Gradient storage, allocated (zeroed) on first use.
    double* grad_buffer();
};

class Var {
public:
    Var() = default;

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    bool defined() const { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    /// Direct access for optimizers and checkpoint loading; never call mid-graph.
    Tensor& mutable_value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    /// Accumulated gradient; empty if backward has not reached this node.
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& mutable_grad() { return node_->grad; }
    void zero_grad() { node_->grad.clear(); }

    const std::shared_ptr<Node>& node() const { return node_; }

    double item() const { return node_->value[0]; }

private:
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    friend Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

    std::shared_ptr<Node> node_;
};

/// Builds an op output. The closure is kept only if some input needs a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Seeds d(root)/d(root) = 1 and propagates to every reachable parameter.
void backward(const Var& root);

// Element-wise.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// alpha * a + beta * b
Var add_scaled(const Var& a, double alpha, const Var& b, double beta);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
/// tanh approximation of GELU
Var gelu(const Var& a);

// Shape manipulation.
Var reshape(const Var& a, Shape shape);
/// Swap the last two axes.
Var transpose_last2(const Var& a);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t length);
/// b's shape must equal the trailing axes of a; b is broadcast over the leading ones.
Var add_trailing(const Var& a, const Var& b);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var mean_axis(const Var& a, std::size_t axis);
/// mean((pred - target)^2) over all elements
Var mean_squared_error(const Var& pred, const Var& target);

// Dense layers.
Var matmul(const Var& a, const Var& b);
/// x[..., in] -> x W^T + bias over the last axis; bias may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// Multi-head scaled dot-product self attention over [G, S, C] inputs with a causal
/// mask: position s attends to positions 0..s only.
Var causal_attention(const Var& q, const Var& k, const Var& v, std::size_t heads);

/// Row-wise x / (||x|| + eps) over the last axis.
Var l2_normalize_rows(const Var& x, double eps);
/// J[B, N, C] -> J J^T per batch entry with the diagonal pinned to 1 (rows are unit vectors).
Var gram_unit_diagonal(const Var& j);

// Graph operators.
/// sigmoid(gate) * x + (1 - sigmoid(gate)) * y. gate is [N, N]; x and y are [N, N]
/// or [B, N, N]; the result is [B, N, N] (B = 1 when neither input is batched).
Var gated_mix(const Var& gate, const Var& x, const Var& y);
/// D^-1 (A + I) with D the row sums of A + I, for A[B, N, N].
Var self_loop_row_normalize(const Var& adjacency);
/// out[b, c, i, t] = sum_j P[b, i, j] * H[b, c, j, t]
Var node_propagate(const Var& propagation, const Var& features);
/// out[i, j, :] = u[i, :] + v[j, :] + bias
Var pairwise_sum(const Var& u, const Var& v, const Var& bias);

// Convolutions over [B, C, N, T] feature maps.
/// x[B, N, T] -> out[b, c, i, t] = w[c] * x[b, i, t] + bias[c]
Var pointwise_channels(const Var& x, const Var& weight, const Var& bias);
/// Causal temporal convolution with left zero padding (kernel-1)*dilation, W[Co, Ci, K].
Var temporal_conv(const Var& x, const Var& weight, const Var& bias, std::size_t dilation);
/// 1x1 convolution mixing channels, W[Co, Ci]; bias may be undefined.
Var channel_mix(const Var& x, const Var& weight, const Var& bias);
/// Convolution whose kernel spans the whole time axis, W[Co, Ci, T] -> out[B, Co, N].
Var full_time_conv(const Var& x, const Var& weight, const Var& bias);

struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

/// Per-channel normalization of x[B, C, N, T]. In training mode the batch statistics
/// are used and, if update_running is set, folded into the running estimates.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state, bool training,
               bool update_running);

} // namespace dygraph::ad
