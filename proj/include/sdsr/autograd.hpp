#pragma once

// Tape-free reverse-mode differentiation over Tensor values. Every op builds a
// node that remembers its parents and a closure accumulating parent gradients;
// backward() walks the graph in reverse topological order.

#include <functional>
#include <memory>
#include <vector>

#include "sdsr/tensor.hpp"

namespace sdsr::ag {

struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    /// Gradient buffer, allocated as zeros on first use.
    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : m_node(std::move(node)) {}

    bool defined() const { return static_cast<bool>(m_node); }
    const Tensor& value() const { return m_node->value; }
    /// Direct write access to the stored value, used by optimizers and loaders.
    Tensor& mutable_value() { return m_node->value; }
    const Tensor& grad() const { return m_node->grad; }
    Tensor& grad() { return m_node->grad_buffer(); }
    bool requires_grad() const { return m_node && m_node->requires_grad; }
    void set_requires_grad(bool on) { m_node->requires_grad = on; }
    const Shape& shape() const { return m_node->value.shape(); }
    int dim(int i) const { return m_node->value.dim(i); }
    void zero_grad() { m_node->grad = Tensor(); }

    Node* node() const { return m_node.get(); }
    const std::shared_ptr<Node>& ptr() const { return m_node; }

private:
    std::shared_ptr<Node> m_node;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }

/// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every reachable node.
void backward(const Var& loss);

bool grad_enabled();

/// Disables graph construction for the guard's lifetime (inference paths).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool m_prev;
};

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a * s where s is a one-element tensor (learned scalar gains).
Var mul_scalar(const Var& a, const Var& s);
/// x [N,C,H,W] + v [N,C] broadcast over space.
Var add_channel_vector(const Var& x, const Var& v);
Var silu(const Var& x);
Var sigmoid(const Var& x);
Var leaky_relu(const Var& x, double slope);

// Structure
Var reshape(const Var& x, Shape shape);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(const Var& x, int axis, int start, int count);
/// out[i] = x[index[i]]; backward scatter-adds, so repeated indices are allowed.
Var gather(const Var& x, std::shared_ptr<const std::vector<int>> index, Shape out_shape);
/// [N,C,H,W] -> [N,H*W,C]
Var to_tokens(const Var& x);
/// [N,H*W,C] -> [N,C,H,W]
Var from_tokens(const Var& t, int h, int w);
/// [N,C,H,W] -> [N*(H/ws)*(W/ws), ws*ws, C]
Var window_partition(const Var& x, int ws);
/// Inverse of window_partition.
Var window_merge(const Var& t, int n, int c, int h, int w, int ws);
Var pixel_shuffle(const Var& x, int r);
Var upsample_nearest(const Var& x, int r);
/// Mean over axis 1 of [N,L,C] -> [N,C].
Var mean_tokens(const Var& t);

// Layers
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
/// x [..., Din] times weight^T [Din, Dout] plus bias [Dout].
Var linear(const Var& x, const Var& weight, const Var& bias);
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Normalizes the last axis; no affine parameters.
Var layer_norm(const Var& x, double eps = 1e-5);
/// softmax(tau * q k^T / sqrt(C)) v for q [B,Nq,C], k [B,Nk,C], v [B,Nk,Cv].
/// tau is a one-element Var; kv_len (optional, size B) limits the keys each item attends to.
Var attention(const Var& q, const Var& k, const Var& v, const Var& tau, const std::vector<int>& kv_len = {});

// Reductions and losses (scalar results have shape [1])
Var sum_all(const Var& x);
Var mean_all(const Var& x);
Var mse(const Var& a, const Var& b);
Var l1(const Var& a, const Var& b);
Var bce_with_logits(const Var& logits, const Tensor& targets);

}  // namespace sdsr::ag
