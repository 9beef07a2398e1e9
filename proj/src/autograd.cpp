#include "sdsr/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "sdsr/kernels.hpp"

namespace sdsr::ag {

namespace {

thread_local bool t_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Var make(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (t_grad_enabled) {
        bool any = false;
        for (const Var& p : parents)
            if (p.defined() && p.requires_grad()) any = true;
        if (any) {
            n->requires_grad = true;
            for (const Var& p : parents)
                if (p.defined()) n->parents.push_back(p.ptr());
            n->backward = std::move(fn);
        }
    }
    return Var(std::move(n));
}

Var make_many(Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    if (t_grad_enabled) {
        bool any = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
        if (any) {
            n->requires_grad = true;
            for (const Var& p : parents) n->parents.push_back(p.ptr());
            n->backward = std::move(fn);
        }
    }
    return Var(std::move(n));
}

bool needs(const Node* n) { return n != nullptr && n->requires_grad; }

void require_rank(const Var& x, int rank, const char* what) {
    if (x.value().ndim() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
}

void require_same(const Var& a, const Var& b, const char* what) {
    require_same_shape(a.value(), b.value(), what);
}

std::size_t prod(const Shape& s, int from, int to) {
    std::size_t p = 1;
    for (int i = from; i < to; ++i) p *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
    return p;
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : m_node(std::make_shared<Node>()) {
    m_node->value = std::move(value);
    m_node->requires_grad = requires_grad;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : m_prev(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = m_prev; }

void backward(const Var& loss) {
    if (!loss.requires_grad()) throw std::logic_error("backward: loss does not depend on any trainable value");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->grad = Tensor(loss.shape(), 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    Node* pa = a.node();
    Node* pb = b.node();
    return make(a.value() + b.value(), {a, b}, [pa, pb](Node& self) {
        if (needs(pa)) pa->grad_buffer() += self.grad;
        if (needs(pb)) pb->grad_buffer() += self.grad;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same(a, b, "sub");
    Node* pa = a.node();
    Node* pb = b.node();
    return make(a.value() - b.value(), {a, b}, [pa, pb](Node& self) {
        if (needs(pa)) pa->grad_buffer() += self.grad;
        if (needs(pb)) pb->grad_buffer() -= self.grad;
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    Node* pa = a.node();
    Node* pb = b.node();
    return make(std::move(out), {a, b}, [pa, pb](Node& self) {
        const std::size_t n = self.grad.numel();
        if (needs(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (needs(pb)) {
            Tensor& g = pb->grad_buffer();
            for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * pa->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    Node* pa = a.node();
    return make(a.value() * s, {a}, [pa, s](Node& self) {
        Tensor& g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += s * self.grad[i];
    });
}

Var mul_scalar(const Var& a, const Var& s) {
    if (s.value().numel() != 1) throw ShapeError("mul_scalar: gain must have one element");
    Node* pa = a.node();
    Node* ps = s.node();
    return make(a.value() * s.value()[0], {a, s}, [pa, ps](Node& self) {
        const double sv = ps->value[0];
        if (needs(pa)) {
            Tensor& g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += sv * self.grad[i];
        }
        if (needs(ps)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < self.grad.numel(); ++i) acc += self.grad[i] * pa->value[i];
            ps->grad_buffer()[0] += acc;
        }
    });
}

Var add_channel_vector(const Var& x, const Var& v) {
    if (x.value().ndim() < 2 || v.value().ndim() != 2 || v.dim(0) != x.dim(0) || v.dim(1) != x.dim(1))
        throw ShapeError("add_channel_vector: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t inner = prod(x.shape(), 2, x.value().ndim());
    Tensor out = x.value();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) {
            const double b = v.value()[static_cast<std::size_t>(i) * c + j];
            double* p = out.vec().data() + (static_cast<std::size_t>(i) * c + j) * inner;
            for (std::size_t k = 0; k < inner; ++k) p[k] += b;
        }
    Node* px = x.node();
    Node* pv = v.node();
    return make(std::move(out), {x, v}, [px, pv, n, c, inner](Node& self) {
        if (needs(px)) px->grad_buffer() += self.grad;
        if (needs(pv)) {
            Tensor& g = pv->grad_buffer();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < c; ++j) {
                    const double* p = self.grad.vec().data() + (static_cast<std::size_t>(i) * c + j) * inner;
                    double s = 0.0;
                    for (std::size_t k = 0; k < inner; ++k) s += p[k];
                    g[static_cast<std::size_t>(i) * c + j] += s;
                }
        }
    });
}

Var silu(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.vec()) v = v / (1.0 + std::exp(-v));
    Node* px = x.node();
    return make(std::move(out), {x}, [px](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double v = px->value[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            g[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x.value();
    for (double& v : out.vec()) v = 1.0 / (1.0 + std::exp(-v));
    Node* px = x.node();
    return make(std::move(out), {x}, [px](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double s = self.value[i];
            g[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

Var leaky_relu(const Var& x, double slope) {
    Tensor out = x.value();
    for (double& v : out.vec()) v = v > 0 ? v : slope * v;
    Node* px = x.node();
    return make(std::move(out), {x}, [px, slope](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * (px->value[i] > 0 ? 1.0 : slope);
    });
}

// ---------------------------------------------------------------- structure

Var reshape(const Var& x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    Node* px = x.node();
    return make(std::move(out), {x}, [px](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    });
}

Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    const Shape& s0 = parts[0].shape();
    const int rank = static_cast<int>(s0.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
    Shape out_shape = s0;
    out_shape[static_cast<std::size_t>(axis)] = 0;
    std::vector<std::size_t> chunk;
    for (const Var& p : parts) {
        Shape a = p.shape();
        if (static_cast<int>(a.size()) != rank) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < rank; ++i)
            if (i != axis && a[static_cast<std::size_t>(i)] != s0[static_cast<std::size_t>(i)])
                throw ShapeError("concat: shape mismatch " + shape_str(a) + " vs " + shape_str(s0));
        out_shape[static_cast<std::size_t>(axis)] += a[static_cast<std::size_t>(axis)];
        chunk.push_back(prod(a, axis, rank));
    }
    const std::size_t outer = prod(s0, 0, axis);
    std::size_t row = 0;
    for (std::size_t c : chunk) row += c;
    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const double* src = parts[p].value().vec().data() + o * chunk[p];
            std::copy(src, src + chunk[p], out.vec().data() + o * row + off);
            off += chunk[p];
        }
    }
    std::vector<Node*> nodes;
    for (const Var& p : parts) nodes.push_back(p.node());
    return make_many(std::move(out), parts, [nodes, chunk, outer, row](Node& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < nodes.size(); ++p) {
            if (needs(nodes[p])) {
                Tensor& g = nodes[p]->grad_buffer();
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.vec().data() + o * row + off;
                    double* dst = g.vec().data() + o * chunk[p];
                    for (std::size_t i = 0; i < chunk[p]; ++i) dst[i] += src[i];
                }
            }
            off += chunk[p];
        }
    });
}

Var slice(const Var& x, int axis, int start, int count) {
    const Shape& s = x.shape();
    const int rank = static_cast<int>(s.size());
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank || start < 0 || count < 0 || start + count > s[static_cast<std::size_t>(axis)])
        throw ShapeError("slice out of range for " + shape_str(s));
    Shape out_shape = s;
    out_shape[static_cast<std::size_t>(axis)] = count;
    const std::size_t outer = prod(s, 0, axis);
    const std::size_t inner = prod(s, axis + 1, rank);
    const std::size_t row = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]) * inner;
    const std::size_t take = static_cast<std::size_t>(count) * inner;
    const std::size_t off = static_cast<std::size_t>(start) * inner;
    Tensor out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = x.value().vec().data() + o * row + off;
        std::copy(src, src + take, out.vec().data() + o * take);
    }
    Node* px = x.node();
    return make(std::move(out), {x}, [px, outer, row, take, off](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            const double* src = self.grad.vec().data() + o * take;
            double* dst = g.vec().data() + o * row + off;
            for (std::size_t i = 0; i < take; ++i) dst[i] += src[i];
        }
    });
}

Var gather(const Var& x, std::shared_ptr<const std::vector<int>> index, Shape out_shape) {
    if (shape_numel(out_shape) != index->size()) throw ShapeError("gather: index size does not match output shape");
    Tensor out(std::move(out_shape));
    const auto& idx = *index;
    const auto& src = x.value().vec();
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = src[static_cast<std::size_t>(idx[i])];
    Node* px = x.node();
    return make(std::move(out), {x}, [px, index](Node& self) {
        Tensor& g = px->grad_buffer();
        const auto& ix = *index;
        for (std::size_t i = 0; i < ix.size(); ++i) g[static_cast<std::size_t>(ix[i])] += self.grad[i];
    });
}

Var to_tokens(const Var& x) {
    require_rank(x, 4, "to_tokens");
    const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * hw * c);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int p = 0; p < hw; ++p)
            for (int ch = 0; ch < c; ++ch) (*idx)[i++] = (b * c + ch) * hw + p;
    return gather(x, std::move(idx), {n, hw, c});
}

Var from_tokens(const Var& t, int h, int w) {
    require_rank(t, 3, "from_tokens");
    const int n = t.dim(0), hw = t.dim(1), c = t.dim(2);
    if (hw != h * w) throw ShapeError("from_tokens: token count does not match h*w");
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * hw * c);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int p = 0; p < hw; ++p) (*idx)[i++] = (b * hw + p) * c + ch;
    return gather(t, std::move(idx), {n, c, h, w});
}

Var window_partition(const Var& x, int ws) {
    require_rank(x, 4, "window_partition");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % ws || w % ws) throw ShapeError("window_partition: size not divisible by window");
    const int nwy = h / ws, nwx = w / ws;
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * c * h * w);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int wy = 0; wy < nwy; ++wy)
            for (int wx = 0; wx < nwx; ++wx)
                for (int iy = 0; iy < ws; ++iy)
                    for (int ix = 0; ix < ws; ++ix)
                        for (int ch = 0; ch < c; ++ch)
                            (*idx)[i++] = ((b * c + ch) * h + wy * ws + iy) * w + wx * ws + ix;
    return gather(x, std::move(idx), {n * nwy * nwx, ws * ws, c});
}

Var window_merge(const Var& t, int n, int c, int h, int w, int ws) {
    require_rank(t, 3, "window_merge");
    const int nwy = h / ws, nwx = w / ws;
    if (t.dim(0) != n * nwy * nwx || t.dim(1) != ws * ws || t.dim(2) != c)
        throw ShapeError("window_merge: shape mismatch " + shape_str(t.shape()));
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * c * h * w);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const int win = (b * nwy + y / ws) * nwx + xx / ws;
                    const int pos = (y % ws) * ws + xx % ws;
                    (*idx)[i++] = (win * ws * ws + pos) * c + ch;
                }
    return gather(t, std::move(idx), {n, c, h, w});
}

Var pixel_shuffle(const Var& x, int r) {
    require_rank(x, 4, "pixel_shuffle");
    const int n = x.dim(0), cr = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (cr % (r * r)) throw ShapeError("pixel_shuffle: channels not divisible by r^2");
    const int c = cr / (r * r), oh = h * r, ow = w * r;
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * cr * h * w);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < oh; ++y)
                for (int xx = 0; xx < ow; ++xx) {
                    const int src_c = ch * r * r + (y % r) * r + xx % r;
                    (*idx)[i++] = ((b * cr + src_c) * h + y / r) * w + xx / r;
                }
    return gather(x, std::move(idx), {n, c, oh, ow});
}

Var upsample_nearest(const Var& x, int r) {
    require_rank(x, 4, "upsample_nearest");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    auto idx = std::make_shared<std::vector<int>>(static_cast<std::size_t>(n) * c * h * w * r * r);
    std::size_t i = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h * r; ++y)
                for (int xx = 0; xx < w * r; ++xx) (*idx)[i++] = ((b * c + ch) * h + y / r) * w + xx / r;
    return gather(x, std::move(idx), {n, c, h * r, w * r});
}

Var mean_tokens(const Var& t) {
    require_rank(t, 3, "mean_tokens");
    const int n = t.dim(0), l = t.dim(1), c = t.dim(2);
    Tensor out({n, c});
    for (int b = 0; b < n; ++b)
        for (int p = 0; p < l; ++p)
            for (int ch = 0; ch < c; ++ch)
                out[static_cast<std::size_t>(b) * c + ch] += t.value()[(static_cast<std::size_t>(b) * l + p) * c + ch] / l;
    Node* pt = t.node();
    return make(std::move(out), {t}, [pt, n, l, c](Node& self) {
        Tensor& g = pt->grad_buffer();
        for (int b = 0; b < n; ++b)
            for (int p = 0; p < l; ++p)
                for (int ch = 0; ch < c; ++ch)
                    g[(static_cast<std::size_t>(b) * l + p) * c + ch] += self.grad[static_cast<std::size_t>(b) * c + ch] / l;
    });
}

// ---------------------------------------------------------------- layers

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d weight");
    kernels::ConvGeom g;
    g.cin = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.cout = weight.dim(0);
    g.k = weight.dim(2);
    g.stride = stride;
    g.pad = pad;
    if (weight.dim(1) != g.cin || weight.dim(3) != g.k)
        throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                         shape_str(x.shape()));
    if (bias.defined() && (bias.value().numel() != static_cast<std::size_t>(g.cout)))
        throw ShapeError("conv2d: bias size mismatch");
    if (g.out_h() <= 0 || g.out_w() <= 0) throw ShapeError("conv2d: input smaller than kernel");
    const int n = x.dim(0);
    Tensor out({n, g.cout, g.out_h(), g.out_w()});
    const std::size_t in_sz = static_cast<std::size_t>(g.cin) * g.h * g.w;
    const std::size_t out_sz = static_cast<std::size_t>(g.cout) * g.out_h() * g.out_w();
    std::span<const double> bspan;
    if (bias.defined()) bspan = bias.value().data();
    for (int b = 0; b < n; ++b)
        kernels::conv2d_forward(g, x.value().data().subspan(b * in_sz, in_sz), weight.value().data(), bspan,
                                out.data().subspan(b * out_sz, out_sz));
    Node* px = x.node();
    Node* pw = weight.node();
    Node* pb = bias.defined() ? bias.node() : nullptr;
    return make(std::move(out), {x, weight, bias}, [px, pw, pb, g, n, in_sz, out_sz](Node& self) {
        const bool gx = needs(px), gw = needs(pw), gb = needs(pb);
        std::span<double> dw, db;
        if (gw) dw = pw->grad_buffer().data();
        Tensor db_dummy;
        if (gb) db = pb->grad_buffer().data();
        for (int b = 0; b < n; ++b) {
            auto dy = self.grad.data().subspan(b * out_sz, out_sz);
            if (gx) kernels::conv2d_backward_input(g, dy, pw->value.data(), px->grad_buffer().data().subspan(b * in_sz, in_sz));
            if (gw) {
                kernels::conv2d_backward_weight(g, px->value.data().subspan(b * in_sz, in_sz), dy, dw, db);
            } else if (gb) {
                const int ncols = g.col_cols();
                for (int co = 0; co < g.cout; ++co)
                    for (int j = 0; j < ncols; ++j) db[co] += dy[static_cast<std::size_t>(co) * ncols + j];
            }
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    require_rank(weight, 2, "linear weight");
    const int din = weight.dim(1), dout = weight.dim(0);
    if (x.dim(-1) != din)
        throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
    const int m = static_cast<int>(x.value().numel() / static_cast<std::size_t>(din));
    Shape out_shape = x.shape();
    out_shape.back() = dout;
    Tensor out(out_shape);
    kernels::gemm(false, true, m, dout, din, 1.0, x.value().data(), weight.value().data(), 0.0, out.data());
    if (bias.defined()) {
        if (bias.value().numel() != static_cast<std::size_t>(dout)) throw ShapeError("linear: bias size mismatch");
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < dout; ++j) out[static_cast<std::size_t>(i) * dout + j] += bias.value()[static_cast<std::size_t>(j)];
    }
    Node* px = x.node();
    Node* pw = weight.node();
    Node* pb = bias.defined() ? bias.node() : nullptr;
    return make(std::move(out), {x, weight, bias}, [px, pw, pb, m, din, dout](Node& self) {
        if (needs(px))
            kernels::gemm(false, false, m, din, dout, 1.0, self.grad.data(), pw->value.data(), 1.0,
                          px->grad_buffer().data());
        if (needs(pw))
            kernels::gemm(true, false, dout, din, m, 1.0, self.grad.data(), px->value.data(), 1.0,
                          pw->grad_buffer().data());
        if (needs(pb)) {
            Tensor& g = pb->grad_buffer();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < dout; ++j) g[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(i) * dout + j];
        }
    });
}

Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, double eps) {
    if (x.value().ndim() < 2) throw ShapeError("group_norm: rank < 2");
    const int n = x.dim(0), c = x.dim(1);
    if (groups <= 0 || c % groups) throw ShapeError("group_norm: channels not divisible by groups");
    const std::size_t inner = prod(x.shape(), 2, x.value().ndim());
    const int cpg = c / groups;
    const std::size_t gsz = static_cast<std::size_t>(cpg) * inner;
    auto xhat = std::make_shared<Tensor>(x.shape());
    auto rstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * groups);
    Tensor out(x.shape());
    for (int b = 0; b < n; ++b)
        for (int gi = 0; gi < groups; ++gi) {
            const std::size_t base = (static_cast<std::size_t>(b) * c + gi * cpg) * inner;
            const double* src = x.value().vec().data() + base;
            double mean = 0.0;
            for (std::size_t i = 0; i < gsz; ++i) mean += src[i];
            mean /= static_cast<double>(gsz);
            double var = 0.0;
            for (std::size_t i = 0; i < gsz; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= static_cast<double>(gsz);
            const double rs = 1.0 / std::sqrt(var + eps);
            (*rstd)[static_cast<std::size_t>(b) * groups + gi] = rs;
            for (std::size_t i = 0; i < gsz; ++i) {
                const int ch = gi * cpg + static_cast<int>(i / inner);
                const double xh = (src[i] - mean) * rs;
                (*xhat)[base + i] = xh;
                const double gm = gamma.defined() ? gamma.value()[static_cast<std::size_t>(ch)] : 1.0;
                const double bt = beta.defined() ? beta.value()[static_cast<std::size_t>(ch)] : 0.0;
                out[base + i] = xh * gm + bt;
            }
        }
    Node* px = x.node();
    Node* pg = gamma.defined() ? gamma.node() : nullptr;
    Node* pb = beta.defined() ? beta.node() : nullptr;
    return make(std::move(out), {x, gamma, beta}, [=](Node& self) {
        for (int b = 0; b < n; ++b)
            for (int gi = 0; gi < groups; ++gi) {
                const std::size_t base = (static_cast<std::size_t>(b) * c + gi * cpg) * inner;
                double sum_d = 0.0, sum_dx = 0.0;
                for (std::size_t i = 0; i < gsz; ++i) {
                    const int ch = gi * cpg + static_cast<int>(i / inner);
                    const double gm = pg ? pg->value[static_cast<std::size_t>(ch)] : 1.0;
                    const double d = self.grad[base + i] * gm;
                    sum_d += d;
                    sum_dx += d * (*xhat)[base + i];
                    if (needs(pg)) pg->grad_buffer()[static_cast<std::size_t>(ch)] += self.grad[base + i] * (*xhat)[base + i];
                    if (needs(pb)) pb->grad_buffer()[static_cast<std::size_t>(ch)] += self.grad[base + i];
                }
                if (!needs(px)) continue;
                const double rs = (*rstd)[static_cast<std::size_t>(b) * groups + gi];
                const double inv_n = 1.0 / static_cast<double>(gsz);
                Tensor& g = px->grad_buffer();
                for (std::size_t i = 0; i < gsz; ++i) {
                    const int ch = gi * cpg + static_cast<int>(i / inner);
                    const double gm = pg ? pg->value[static_cast<std::size_t>(ch)] : 1.0;
                    const double d = self.grad[base + i] * gm;
                    g[base + i] += rs * (d - inv_n * sum_d - (*xhat)[base + i] * inv_n * sum_dx);
                }
            }
    });
}

Var layer_norm(const Var& x, double eps) {
    const int c = x.dim(-1);
    const std::size_t rows = x.value().numel() / static_cast<std::size_t>(c);
    auto xhat = std::make_shared<Tensor>(x.shape());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* src = x.value().vec().data() + r * c;
        double mean = 0.0;
        for (int i = 0; i < c; ++i) mean += src[i];
        mean /= c;
        double var = 0.0;
        for (int i = 0; i < c; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= c;
        const double rs = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = rs;
        for (int i = 0; i < c; ++i) (*xhat)[r * c + i] = (src[i] - mean) * rs;
    }
    Node* px = x.node();
    Tensor out = *xhat;
    return make(std::move(out), {x}, [px, xhat, rstd, rows, c](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (int i = 0; i < c; ++i) {
                sum_d += self.grad[r * c + i];
                sum_dx += self.grad[r * c + i] * (*xhat)[r * c + i];
            }
            for (int i = 0; i < c; ++i)
                g[r * c + i] += (*rstd)[r] * (self.grad[r * c + i] - sum_d / c - (*xhat)[r * c + i] * sum_dx / c);
        }
    });
}

Var attention(const Var& q, const Var& k, const Var& v, const Var& tau, const std::vector<int>& kv_len) {
    require_rank(q, 3, "attention q");
    require_rank(k, 3, "attention k");
    require_rank(v, 3, "attention v");
    const int b = q.dim(0), nq = q.dim(1), c = q.dim(2);
    const int nk = k.dim(1), cv = v.dim(2);
    if (k.dim(0) != b || v.dim(0) != b || k.dim(2) != c || v.dim(1) != nk)
        throw ShapeError("attention: q " + shape_str(q.shape()) + " k " + shape_str(k.shape()) + " v " +
                         shape_str(v.shape()));
    if (tau.value().numel() != 1) throw ShapeError("attention: tau must have one element");
    const double tv = tau.value()[0];
    if (!(tv > 0.0)) throw RangeError("attention: temperature must be positive");
    if (!kv_len.empty() && static_cast<int>(kv_len.size()) != b) throw ShapeError("attention: kv_len size mismatch");
    auto lens = std::make_shared<std::vector<int>>(kv_len.empty() ? std::vector<int>(static_cast<std::size_t>(b), nk) : kv_len);
    for (int l : *lens)
        if (l < 1 || l > nk) throw ShapeError("attention: kv_len out of range");
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(c));
    const double sc = tv * inv_sqrt_c;
    auto probs = std::make_shared<Tensor>(Shape{b, nq, nk});
    Tensor out({b, nq, cv});
    const std::size_t qs = static_cast<std::size_t>(nq) * c, ks = static_cast<std::size_t>(nk) * c,
                      vs = static_cast<std::size_t>(nk) * cv, ps = static_cast<std::size_t>(nq) * nk,
                      os = static_cast<std::size_t>(nq) * cv;
    for (int i = 0; i < b; ++i)
        kernels::attention_forward(nq, nk, c, cv, sc, (*lens)[static_cast<std::size_t>(i)],
                                   q.value().data().subspan(i * qs, qs), k.value().data().subspan(i * ks, ks),
                                   v.value().data().subspan(i * vs, vs), probs->data().subspan(i * ps, ps),
                                   out.data().subspan(i * os, os));
    Node* pq = q.node();
    Node* pk = k.node();
    Node* pv = v.node();
    Node* pt = tau.node();
    return make(std::move(out), {q, k, v, tau}, [=](Node& self) {
        std::vector<double> dp(ps), raw;
        double dtau = 0.0;
        for (int i = 0; i < b; ++i) {
            auto p = probs->data().subspan(i * ps, ps);
            auto dout = self.grad.data().subspan(i * os, os);
            if (needs(pv))
                kernels::gemm(true, false, nk, cv, nq, 1.0, p, dout, 1.0, pv->grad_buffer().data().subspan(i * vs, vs));
            if (!(needs(pq) || needs(pk) || needs(pt))) continue;
            kernels::gemm(false, true, nq, nk, cv, 1.0, dout, pv->value.data().subspan(i * vs, vs), 0.0, dp);
            for (int r = 0; r < nq; ++r) {
                double dot = 0.0;
                for (int j = 0; j < nk; ++j) dot += dp[static_cast<std::size_t>(r) * nk + j] * p[static_cast<std::size_t>(r) * nk + j];
                for (int j = 0; j < nk; ++j) {
                    const std::size_t e = static_cast<std::size_t>(r) * nk + j;
                    dp[e] = p[e] * (dp[e] - dot);
                }
            }
            auto qv = pq->value.data().subspan(i * qs, qs);
            auto kvv = pk->value.data().subspan(i * ks, ks);
            if (needs(pq)) kernels::gemm(false, false, nq, c, nk, sc, dp, kvv, 1.0, pq->grad_buffer().data().subspan(i * qs, qs));
            if (needs(pk)) kernels::gemm(true, false, nk, c, nq, sc, dp, qv, 1.0, pk->grad_buffer().data().subspan(i * ks, ks));
            if (needs(pt)) {
                raw.resize(ps);
                kernels::gemm(false, true, nq, nk, c, inv_sqrt_c, qv, kvv, 0.0, raw);
                for (std::size_t e = 0; e < ps; ++e) dtau += dp[e] * raw[e];
            }
        }
        if (needs(pt)) pt->grad_buffer()[0] += dtau;
    });
}

// ---------------------------------------------------------------- reductions

Var sum_all(const Var& x) {
    Tensor out({1}, x.value().sum());
    Node* px = x.node();
    return make(std::move(out), {x}, [px](Node& self) {
        Tensor& g = px->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[0];
    });
}

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().numel())); }

Var mse(const Var& a, const Var& b) {
    require_same(a, b, "mse");
    const std::size_t n = a.value().numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a.value()[i] - b.value()[i];
        s += d * d;
    }
    Node* pa = a.node();
    Node* pb = b.node();
    return make(Tensor({1}, s / static_cast<double>(n)), {a, b}, [pa, pb, n](Node& self) {
        const double k = 2.0 * self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = k * (pa->value[i] - pb->value[i]);
            if (needs(pa)) pa->grad_buffer()[i] += d;
            if (needs(pb)) pb->grad_buffer()[i] -= d;
        }
    });
}

Var l1(const Var& a, const Var& b) {
    require_same(a, b, "l1");
    const std::size_t n = a.value().numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(a.value()[i] - b.value()[i]);
    Node* pa = a.node();
    Node* pb = b.node();
    return make(Tensor({1}, s / static_cast<double>(n)), {a, b}, [pa, pb, n](Node& self) {
        const double k = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double diff = pa->value[i] - pb->value[i];
            const double d = diff > 0 ? k : (diff < 0 ? -k : 0.0);
            if (needs(pa)) pa->grad_buffer()[i] += d;
            if (needs(pb)) pb->grad_buffer()[i] -= d;
        }
    });
}

Var bce_with_logits(const Var& logits, const Tensor& targets) {
    require_same_shape(logits.value(), targets, "bce_with_logits");
    const std::size_t n = targets.numel();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits.value()[i];
        s += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    Node* pl = logits.node();
    return make(Tensor({1}, s / static_cast<double>(n)), {logits}, [pl, targets, n](Node& self) {
        Tensor& g = pl->grad_buffer();
        const double k = self.grad[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) g[i] += k * (1.0 / (1.0 + std::exp(-pl->value[i])) - targets[i]);
    });
}

}  // namespace sdsr::ag
