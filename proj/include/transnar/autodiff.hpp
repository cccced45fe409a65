#pragma once

// Reverse-mode tape over dense tensors. Define-by-run: ops append nodes in
// topological order, backward walks the tape in reverse. Matrix products go
// through Eigen; everything else is explicit loops. Single-threaded and
// bitwise deterministic for a fixed op sequence.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "transnar/tensor.hpp"

namespace transnar::ad {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;
template <typename T>
using EStrideMap = Eigen::Map<EMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ECStrideMap = Eigen::Map<const EMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // lazily allocated on first accumulation
    bool needs_grad = false;
    std::function<void()> back;  // empty for leaves/constants
};

template <typename T>
class Tape;

template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    long idx = -1;

    const Tensor<T>& val() const;
    const Shape& shape() const { return val().shape; }
    long numel() const { return val().numel(); }
    bool defined() const { return tape != nullptr; }
};

template <typename T>
class Tape {
public:
    using value_type = T;

    Var<T> leaf(Tensor<T> v, bool needs_grad) {
        nodes_.push_back(std::make_unique<Node<T>>());
        nodes_.back()->val = std::move(v);
        nodes_.back()->needs_grad = needs_grad;
        return {this, static_cast<long>(nodes_.size()) - 1};
    }

    Var<T> constant(Tensor<T> v) { return leaf(std::move(v), false); }

    Node<T>& node(long i) { return *nodes_[static_cast<size_t>(i)]; }
    const Node<T>& node(long i) const { return *nodes_[static_cast<size_t>(i)]; }
    long size() const { return static_cast<long>(nodes_.size()); }

    /// Accumulate g into node i's grad buffer.
    void accum(long i, const Tensor<T>& g) {
        Node<T>& n = node(i);
        if (!n.needs_grad) return;
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
        for (long j = 0; j < g.numel(); ++j) n.grad.at(j) += g.at(j);
    }

    Tensor<T>& grad_buf(long i) {
        Node<T>& n = node(i);
        if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
        return n.grad;
    }

    bool has_grad(long i) const { return !node(i).grad.empty(); }

    /// Run reverse pass from a scalar loss. Flushes leaf grads registered via
    /// link_param into the external buffers afterwards.
    void backward(const Var<T>& loss) {
        if (loss.tape != this) throw std::logic_error("backward: var from another tape");
        Node<T>& ln = node(loss.idx);
        if (ln.val.numel() != 1) throw std::logic_error("backward: loss must be scalar");
        if (ln.grad.empty()) ln.grad = Tensor<T>::zeros(ln.val.shape);
        ln.grad.at(0) = T(1);
        for (long i = loss.idx; i >= 0; --i) {
            Node<T>& n = node(i);
            if (n.grad.empty() || !n.back) continue;
            n.back();
        }
        for (auto& [param_grad, node_idx] : param_links_) {
            Node<T>& n = node(node_idx);
            if (n.grad.empty()) continue;
            for (long j = 0; j < n.grad.numel(); ++j) param_grad->at(j) += n.grad.at(j);
        }
    }

    /// Leaf bound to an external parameter; grads flush into *grad on backward.
    Var<T> param_leaf(const Tensor<T>& value, Tensor<T>* grad) {
        Var<T> v = leaf(value, true);
        param_links_.emplace_back(grad, v.idx);
        return v;
    }

    void reset() {
        nodes_.clear();
        param_links_.clear();
        ++epoch_;
    }

    /// Monotone counter bumped on reset; lets callers invalidate cached node ids.
    uint64_t epoch() const { return epoch_; }

private:
    std::vector<std::unique_ptr<Node<T>>> nodes_;
    std::vector<std::pair<Tensor<T>*, long>> param_links_;
    uint64_t epoch_ = 1;
};

template <typename T>
const Tensor<T>& Var<T>::val() const {
    return tape->node(idx).val;
}

namespace detail {

template <typename T>
bool want(const Var<T>& a) {
    return a.tape->node(a.idx).needs_grad;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    if (!a.val().same_shape(b.val())) throw std::invalid_argument("add: shape mismatch");
    Tape<T>& tp = *a.tape;
    Tensor<T> out = a.val();
    for (long i = 0; i < out.numel(); ++i) out.at(i) += b.val().at(i);
    const bool ng = detail::want(a) || detail::want(b);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, b, o]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            tp.accum(a.idx, g);
            tp.accum(b.idx, g);
        };
    return o;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    if (!a.val().same_shape(b.val())) throw std::invalid_argument("sub: shape mismatch");
    Tape<T>& tp = *a.tape;
    Tensor<T> out = a.val();
    for (long i = 0; i < out.numel(); ++i) out.at(i) -= b.val().at(i);
    const bool ng = detail::want(a) || detail::want(b);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, b, o]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            tp.accum(a.idx, g);
            if (tp.node(b.idx).needs_grad) {
                Tensor<T> gb = g;
                for (long i = 0; i < gb.numel(); ++i) gb.at(i) = -gb.at(i);
                tp.accum(b.idx, gb);
            }
        };
    return o;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    if (!a.val().same_shape(b.val())) throw std::invalid_argument("mul: shape mismatch");
    Tape<T>& tp = *a.tape;
    Tensor<T> out = a.val();
    for (long i = 0; i < out.numel(); ++i) out.at(i) *= b.val().at(i);
    const bool ng = detail::want(a) || detail::want(b);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, b, o]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            if (tp.node(a.idx).needs_grad) {
                Tensor<T> ga = g;
                for (long i = 0; i < ga.numel(); ++i) ga.at(i) *= b.val().at(i);
                tp.accum(a.idx, ga);
            }
            if (tp.node(b.idx).needs_grad) {
                Tensor<T> gb = g;
                for (long i = 0; i < gb.numel(); ++i) gb.at(i) *= a.val().at(i);
                tp.accum(b.idx, gb);
            }
        };
    return o;
}

template <typename T>
Var<T> scale(Var<T> a, double s) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = a.val();
    for (long i = 0; i < out.numel(); ++i) out.at(i) = static_cast<T>(out.at(i) * s);
    const bool ng = detail::want(a);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, o, s]() {
            Tensor<T> ga = tp.node(o.idx).grad;
            for (long i = 0; i < ga.numel(); ++i) ga.at(i) = static_cast<T>(ga.at(i) * s);
            tp.accum(a.idx, ga);
        };
    return o;
}

template <typename T, typename F, typename DF>
Var<T> unary_elementwise(Var<T> a, F f, DF df) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = a.val();
    for (long i = 0; i < out.numel(); ++i) out.at(i) = f(out.at(i));
    const bool ng = detail::want(a);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, o, df]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            Tensor<T> ga = g;
            for (long i = 0; i < ga.numel(); ++i) ga.at(i) = g.at(i) * df(a.val().at(i), tp.node(o.idx).val.at(i));
            tp.accum(a.idx, ga);
        };
    return o;
}

template <typename T>
Var<T> relu(Var<T> a) {
    return unary_elementwise(
        a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    return unary_elementwise(
        a,
        [](T x) {
            const double xd = static_cast<double>(x);
            return static_cast<T>(0.5 * xd * (1.0 + std::tanh(c * (xd + 0.044715 * xd * xd * xd))));
        },
        [](T x, T) {
            const double xd = static_cast<double>(x);
            const double u = c * (xd + 0.044715 * xd * xd * xd);
            const double t = std::tanh(u);
            const double du = c * (1.0 + 3.0 * 0.044715 * xd * xd);
            return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
        });
}

template <typename T>
Var<T> tanh_v(Var<T> a) {
    return unary_elementwise(
        a, [](T x) { return static_cast<T>(std::tanh(static_cast<double>(x))); },
        [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid_v(Var<T> a) {
    return unary_elementwise(
        a,
        [](T x) {
            const double xd = static_cast<double>(x);
            return static_cast<T>(xd >= 0 ? 1.0 / (1.0 + std::exp(-xd)) : std::exp(xd) / (1.0 + std::exp(xd)));
        },
        [](T, T y) { return y * (T(1) - y); });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, Shape s) {
    Tape<T>& tp = *a.tape;
    Tensor<T> out = a.val().reshaped(s);
    const bool ng = detail::want(a);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, o]() {
            Tensor<T> ga = tp.node(o.idx).grad.reshaped(a.val().shape);
            tp.accum(a.idx, ga);
        };
    return o;
}

template <typename T>
Var<T> slice_last(Var<T> a, long lo, long hi) {
    Tape<T>& tp = *a.tape;
    const long n = a.val().cols();
    const long rows = a.val().rows();
    if (lo < 0 || hi > n || lo >= hi) throw std::invalid_argument("slice_last: bad range");
    Shape s = a.val().shape;
    s.back() = hi - lo;
    Tensor<T> out(s);
    for (long r = 0; r < rows; ++r)
        for (long c = lo; c < hi; ++c) out.at(r * (hi - lo) + (c - lo)) = a.val().at(r * n + c);
    const bool ng = detail::want(a);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, o, lo, hi, n, rows]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            Tensor<T> ga = Tensor<T>::zeros(a.val().shape);
            for (long r = 0; r < rows; ++r)
                for (long c = lo; c < hi; ++c) ga.at(r * n + c) = g.at(r * (hi - lo) + (c - lo));
            tp.accum(a.idx, ga);
        };
    return o;
}

template <typename T>
Var<T> concat_last(Var<T> a, Var<T> b) {
    Tape<T>& tp = *a.tape;
    const long na = a.val().cols(), nb = b.val().cols();
    const long rows = a.val().rows();
    if (rows != b.val().rows()) throw std::invalid_argument("concat_last: row mismatch");
    Shape s = a.val().shape;
    s.back() = na + nb;
    Tensor<T> out(s);
    for (long r = 0; r < rows; ++r) {
        for (long c = 0; c < na; ++c) out.at(r * (na + nb) + c) = a.val().at(r * na + c);
        for (long c = 0; c < nb; ++c) out.at(r * (na + nb) + na + c) = b.val().at(r * nb + c);
    }
    const bool ng = detail::want(a) || detail::want(b);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, b, o, na, nb, rows]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            if (tp.node(a.idx).needs_grad) {
                Tensor<T> ga(a.val().shape);
                for (long r = 0; r < rows; ++r)
                    for (long c = 0; c < na; ++c) ga.at(r * na + c) = g.at(r * (na + nb) + c);
                tp.accum(a.idx, ga);
            }
            if (tp.node(b.idx).needs_grad) {
                Tensor<T> gb(b.val().shape);
                for (long r = 0; r < rows; ++r)
                    for (long c = 0; c < nb; ++c) gb.at(r * nb + c) = g.at(r * (na + nb) + na + c);
                tp.accum(b.idx, gb);
            }
        };
    return o;
}

/// x[..., k] * s[..., 1], broadcasting s over the last axis.
template <typename T>
Var<T> mul_last_bcast(Var<T> x, Var<T> s) {
    Tape<T>& tp = *x.tape;
    const long k = x.val().cols();
    const long rows = x.val().rows();
    if (s.val().numel() != rows) throw std::invalid_argument("mul_last_bcast: scale shape mismatch");
    Tensor<T> out = x.val();
    for (long r = 0; r < rows; ++r)
        for (long c = 0; c < k; ++c) out.at(r * k + c) *= s.val().at(r);
    const bool ng = detail::want(x) || detail::want(s);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, x, s, o, k, rows]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            if (tp.node(x.idx).needs_grad) {
                Tensor<T> gx(x.val().shape);
                for (long r = 0; r < rows; ++r)
                    for (long c = 0; c < k; ++c) gx.at(r * k + c) = g.at(r * k + c) * s.val().at(r);
                tp.accum(x.idx, gx);
            }
            if (tp.node(s.idx).needs_grad) {
                Tensor<T> gs(s.val().shape);
                for (long r = 0; r < rows; ++r) {
                    double acc = 0.0;
                    for (long c = 0; c < k; ++c)
                        acc += static_cast<double>(g.at(r * k + c)) * static_cast<double>(x.val().at(r * k + c));
                    gs.at(r) = static_cast<T>(acc);
                }
                tp.accum(s.idx, gs);
            }
        };
    return o;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

/// y = x @ w (+ b). x: [..., in] treated as [R, in]; w: [in, out]; b: [out].
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
    Tape<T>& tp = *x.tape;
    const long in = x.val().cols();
    const long rows = x.val().rows();
    if (w.val().ndim() != 2 || w.val().dim(0) != in) throw std::invalid_argument("linear: weight shape");
    const long out_dim = w.val().dim(1);
    Shape s = x.val().shape;
    s.back() = out_dim;
    Tensor<T> out(s);
    {
        ECMap<T> xm(x.val().ptr(), rows, in);
        ECMap<T> wm(w.val().ptr(), in, out_dim);
        EMap<T> om(out.ptr(), rows, out_dim);
        om.noalias() = xm * wm;
        if (b.defined()) {
            if (b.val().numel() != out_dim) throw std::invalid_argument("linear: bias shape");
            ECMap<T> bm(b.val().ptr(), 1, out_dim);
            om.rowwise() += bm.row(0);
        }
    }
    const bool ng = detail::want(x) || detail::want(w) || (b.defined() && detail::want(b));
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, x, w, b, o, rows, in, out_dim]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            ECMap<T> gm(g.ptr(), rows, out_dim);
            if (tp.node(x.idx).needs_grad) {
                ECMap<T> wm(w.val().ptr(), in, out_dim);
                EMap<T> gx(tp.grad_buf(x.idx).ptr(), rows, in);
                gx.noalias() += gm * wm.transpose();
            }
            if (tp.node(w.idx).needs_grad) {
                ECMap<T> xm(x.val().ptr(), rows, in);
                EMap<T> gw(tp.grad_buf(w.idx).ptr(), in, out_dim);
                gw.noalias() += xm.transpose() * gm;
            }
            if (b.defined() && tp.node(b.idx).needs_grad) {
                EMap<T> gb(tp.grad_buf(b.idx).ptr(), 1, out_dim);
                gb.row(0) += gm.colwise().sum();
            }
        };
    return o;
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
    return linear(x, w, Var<T>{});
}

/// Batched matmul: a [B,M,K] @ b [B,K,N] -> [B,M,N]; trans_b reads b as [B,N,K].
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool trans_b = false) {
    Tape<T>& tp = *a.tape;
    const long B = a.val().dim(0), M = a.val().dim(1), K = a.val().dim(2);
    const long N = trans_b ? b.val().dim(1) : b.val().dim(2);
    if (b.val().dim(0) != B || (trans_b ? b.val().dim(2) : b.val().dim(1)) != K)
        throw std::invalid_argument("bmm: shape mismatch");
    Tensor<T> out(Shape{B, M, N});
    for (long i = 0; i < B; ++i) {
        ECMap<T> am(a.val().ptr() + i * M * K, M, K);
        EMap<T> om(out.ptr() + i * M * N, M, N);
        if (trans_b) {
            ECMap<T> bm(b.val().ptr() + i * N * K, N, K);
            om.noalias() = am * bm.transpose();
        } else {
            ECMap<T> bm(b.val().ptr() + i * K * N, K, N);
            om.noalias() = am * bm;
        }
    }
    const bool ng = detail::want(a) || detail::want(b);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, b, o, B, M, K, N, trans_b]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            for (long i = 0; i < B; ++i) {
                ECMap<T> gm(g.ptr() + i * M * N, M, N);
                if (tp.node(a.idx).needs_grad) {
                    EMap<T> ga(tp.grad_buf(a.idx).ptr() + i * M * K, M, K);
                    if (trans_b) {
                        ECMap<T> bm(b.val().ptr() + i * N * K, N, K);
                        ga.noalias() += gm * bm;
                    } else {
                        ECMap<T> bm(b.val().ptr() + i * K * N, K, N);
                        ga.noalias() += gm * bm.transpose();
                    }
                }
                if (tp.node(b.idx).needs_grad) {
                    ECMap<T> am(a.val().ptr() + i * M * K, M, K);
                    if (trans_b) {
                        EMap<T> gb(tp.grad_buf(b.idx).ptr() + i * N * K, N, K);
                        gb.noalias() += gm.transpose() * am;
                    } else {
                        EMap<T> gb(tp.grad_buf(b.idx).ptr() + i * K * N, K, N);
                        gb.noalias() += am.transpose() * gm;
                    }
                }
            }
        };
    return o;
}

// ---------------------------------------------------------------------------
// normalization, embedding
// ---------------------------------------------------------------------------

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
    Tape<T>& tp = *x.tape;
    const long n = x.val().cols();
    const long rows = x.val().rows();
    if (gamma.val().numel() != n || beta.val().numel() != n)
        throw std::invalid_argument("layer_norm: gamma/beta shape");
    Tensor<T> out(x.val().shape);
    auto xhat = std::make_shared<Tensor<T>>(x.val().shape);
    auto inv_sigma = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
    for (long r = 0; r < rows; ++r) {
        const T* xr = x.val().ptr() + r * n;
        double mu = 0.0;
        for (long c = 0; c < n; ++c) mu += xr[c];
        mu /= n;
        double var = 0.0;
        for (long c = 0; c < n; ++c) {
            const double d = xr[c] - mu;
            var += d * d;
        }
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[static_cast<size_t>(r)] = static_cast<T>(is);
        for (long c = 0; c < n; ++c) {
            const T xh = static_cast<T>((xr[c] - mu) * is);
            xhat->at(r * n + c) = xh;
            out.at(r * n + c) = xh * gamma.val().at(c) + beta.val().at(c);
        }
    }
    const bool ng = detail::want(x) || detail::want(gamma) || detail::want(beta);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, x, gamma, beta, o, xhat, inv_sigma, rows, n]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            const bool wx = tp.node(x.idx).needs_grad;
            const bool wg = tp.node(gamma.idx).needs_grad;
            const bool wb = tp.node(beta.idx).needs_grad;
            Tensor<T> gx = wx ? Tensor<T>(x.val().shape) : Tensor<T>();
            Tensor<T> gg = wg ? Tensor<T>::zeros(gamma.val().shape) : Tensor<T>();
            Tensor<T> gb = wb ? Tensor<T>::zeros(beta.val().shape) : Tensor<T>();
            for (long r = 0; r < rows; ++r) {
                const T* gr = g.ptr() + r * n;
                const T* xh = xhat->ptr() + r * n;
                if (wg || wb)
                    for (long c = 0; c < n; ++c) {
                        if (wg) gg.at(c) += gr[c] * xh[c];
                        if (wb) gb.at(c) += gr[c];
                    }
                if (wx) {
                    double mean_a = 0.0, mean_ax = 0.0;
                    for (long c = 0; c < n; ++c) {
                        const double a = static_cast<double>(gr[c]) * gamma.val().at(c);
                        mean_a += a;
                        mean_ax += a * xh[c];
                    }
                    mean_a /= n;
                    mean_ax /= n;
                    const double is = (*inv_sigma)[static_cast<size_t>(r)];
                    for (long c = 0; c < n; ++c) {
                        const double a = static_cast<double>(gr[c]) * gamma.val().at(c);
                        gx.at(r * n + c) = static_cast<T>(is * (a - mean_a - xh[c] * mean_ax));
                    }
                }
            }
            if (wx) tp.accum(x.idx, gx);
            if (wg) tp.accum(gamma.idx, gg);
            if (wb) tp.accum(beta.idx, gb);
        };
    return o;
}

/// table [V,k] gathered by ids [B,T] -> [B,T,k].
template <typename T>
Var<T> embedding(Var<T> table, std::shared_ptr<Tensor<long>> ids) {
    Tape<T>& tp = *table.tape;
    const long V = table.val().dim(0), k = table.val().dim(1);
    const long B = ids->dim(0), L = ids->dim(1);
    Tensor<T> out(Shape{B, L, k});
    for (long i = 0; i < B * L; ++i) {
        const long id = ids->at(i);
        if (id < 0 || id >= V) throw std::out_of_range("embedding: id out of range");
        std::copy_n(table.val().ptr() + id * k, k, out.ptr() + i * k);
    }
    const bool ng = detail::want(table);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, table, o, ids, k, B, L]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            Tensor<T>& gt = tp.grad_buf(table.idx);
            for (long i = 0; i < B * L; ++i) {
                const long id = ids->at(i);
                for (long c = 0; c < k; ++c) gt.at(id * k + c) += g.at(i * k + c);
            }
        };
    return o;
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

/// Rotary position encoding applied head-wise. x: [B,T,k] with k = H*dh,
/// positions: [B,T] integer indices. Pairs (2j, 2j+1) within each head rotate
/// by pos * base^(-2j/dh).
template <typename T>
Var<T> rope(Var<T> x, std::shared_ptr<Tensor<long>> positions, long nheads, double base = 10000.0) {
    Tape<T>& tp = *x.tape;
    const long B = x.val().dim(0), L = x.val().dim(1), k = x.val().dim(2);
    const long dh = k / nheads;
    if (k % nheads != 0 || dh % 2 != 0) throw std::invalid_argument("rope: head dim must be even");
    std::vector<double> omega(static_cast<size_t>(dh / 2));
    for (long j = 0; j < dh / 2; ++j) omega[static_cast<size_t>(j)] = std::pow(base, -2.0 * j / dh);

    auto rotate = [positions, omega, B, L, k, nheads, dh](const Tensor<T>& src, Tensor<T>& dst,
                                                          double sign) {
        for (long b = 0; b < B; ++b)
            for (long t = 0; t < L; ++t) {
                const double pos = static_cast<double>(positions->at(b * L + t));
                const T* s = src.ptr() + (b * L + t) * k;
                T* d = dst.ptr() + (b * L + t) * k;
                for (long h = 0; h < nheads; ++h)
                    for (long j = 0; j < dh / 2; ++j) {
                        const double ang = sign * pos * omega[static_cast<size_t>(j)];
                        const double c = std::cos(ang), sn = std::sin(ang);
                        const long i0 = h * dh + 2 * j, i1 = i0 + 1;
                        const double x0 = s[i0], x1 = s[i1];
                        d[i0] = static_cast<T>(x0 * c - x1 * sn);
                        d[i1] = static_cast<T>(x0 * sn + x1 * c);
                    }
            }
    };

    Tensor<T> out(x.val().shape);
    rotate(x.val(), out, 1.0);
    const bool ng = detail::want(x);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, x, o, rotate]() {
            Tensor<T> gx(x.val().shape);
            rotate(tp.node(o.idx).grad, gx, -1.0);
            tp.accum(x.idx, gx);
        };
    return o;
}

/// Scaled dot-product attention over heads packed in the last dim.
/// q: [B,Tq,k], kv: [B,Tk,k]. causal masks key j > i + (Tk - Tq).
template <typename T>
Var<T> sdpa(Var<T> q, Var<T> k, Var<T> v, long nheads, bool causal) {
    Tape<T>& tp = *q.tape;
    const long B = q.val().dim(0), Tq = q.val().dim(1), K = q.val().dim(2);
    const long Tk = k.val().dim(1);
    if (K % nheads != 0) throw std::invalid_argument("sdpa: width not divisible by heads");
    const long dh = K / nheads;
    const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
    const long off = Tk - Tq;
    if (causal && off < 0) throw std::invalid_argument("sdpa: causal requires Tk >= Tq");

    auto probs = std::make_shared<Tensor<T>>(Shape{B, nheads, Tq, Tk});
    Tensor<T> out = Tensor<T>::zeros(q.val().shape);
    EMat<T> scores(Tq, Tk);
    for (long b = 0; b < B; ++b)
        for (long h = 0; h < nheads; ++h) {
            ECStrideMap<T> qm(q.val().ptr() + b * Tq * K + h * dh, Tq, dh, Eigen::OuterStride<>(K));
            ECStrideMap<T> km(k.val().ptr() + b * Tk * K + h * dh, Tk, dh, Eigen::OuterStride<>(K));
            ECStrideMap<T> vm(v.val().ptr() + b * Tk * K + h * dh, Tk, dh, Eigen::OuterStride<>(K));
            scores.noalias() = qm * km.transpose();
            T* p = probs->ptr() + ((b * nheads + h) * Tq) * Tk;
            for (long i = 0; i < Tq; ++i) {
                const long jmax = causal ? std::min(Tk - 1, i + off) : Tk - 1;
                double m = -std::numeric_limits<double>::infinity();
                for (long j = 0; j <= jmax; ++j) m = std::max(m, static_cast<double>(scores(i, j)) * sc);
                double z = 0.0;
                for (long j = 0; j <= jmax; ++j) {
                    const double e = std::exp(static_cast<double>(scores(i, j)) * sc - m);
                    p[i * Tk + j] = static_cast<T>(e);
                    z += e;
                }
                for (long j = jmax + 1; j < Tk; ++j) p[i * Tk + j] = T(0);
                const T iz = static_cast<T>(1.0 / z);
                for (long j = 0; j <= jmax; ++j) p[i * Tk + j] *= iz;
            }
            ECMap<T> pm(p, Tq, Tk);
            EStrideMap<T> om(out.ptr() + b * Tq * K + h * dh, Tq, dh, Eigen::OuterStride<>(K));
            om.noalias() = pm * vm;
        }

    const bool ng = detail::want(q) || detail::want(k) || detail::want(v);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, q, k, v, o, probs, B, Tq, Tk, K, dh, nheads, sc]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            const bool wq = tp.node(q.idx).needs_grad;
            const bool wk = tp.node(k.idx).needs_grad;
            const bool wv = tp.node(v.idx).needs_grad;
            EMat<T> dp(Tq, Tk), ds(Tq, Tk);
            for (long b = 0; b < B; ++b)
                for (long h = 0; h < nheads; ++h) {
                    ECStrideMap<T> gm(g.ptr() + b * Tq * K + h * dh, Tq, dh, Eigen::OuterStride<>(K));
                    ECMap<T> pm(probs->ptr() + ((b * nheads + h) * Tq) * Tk, Tq, Tk);
                    ECStrideMap<T> vm(v.val().ptr() + b * Tk * K + h * dh, Tk, dh, Eigen::OuterStride<>(K));
                    if (wv) {
                        EStrideMap<T> gvm(tp.grad_buf(v.idx).ptr() + b * Tk * K + h * dh, Tk, dh,
                                          Eigen::OuterStride<>(K));
                        gvm.noalias() += pm.transpose() * gm;
                    }
                    if (wq || wk) {
                        dp.noalias() = gm * vm.transpose();
                        const Eigen::Array<T, Eigen::Dynamic, 1> rowdot =
                            (dp.array() * pm.array()).rowwise().sum();
                        ds = (pm.array() * (dp.array().colwise() - rowdot)).matrix() * static_cast<T>(sc);
                        if (wq) {
                            ECStrideMap<T> km(k.val().ptr() + b * Tk * K + h * dh, Tk, dh,
                                              Eigen::OuterStride<>(K));
                            EStrideMap<T> gqm(tp.grad_buf(q.idx).ptr() + b * Tq * K + h * dh, Tq, dh,
                                              Eigen::OuterStride<>(K));
                            gqm.noalias() += ds * km;
                        }
                        if (wk) {
                            ECStrideMap<T> qm(q.val().ptr() + b * Tq * K + h * dh, Tq, dh,
                                              Eigen::OuterStride<>(K));
                            EStrideMap<T> gkm(tp.grad_buf(k.idx).ptr() + b * Tk * K + h * dh, Tk, dh,
                                              Eigen::OuterStride<>(K));
                            gkm.noalias() += ds.transpose() * qm;
                        }
                    }
                }
        };
    return o;
}

// ---------------------------------------------------------------------------
// graph ops
// ---------------------------------------------------------------------------

/// g [B,N,k] -> pairs [B,N,N,2k] with pairs[b,u,v] = [g[b,u], g[b,v]].
template <typename T>
Var<T> concat_pairs(Var<T> g) {
    Tape<T>& tp = *g.tape;
    const long B = g.val().dim(0), N = g.val().dim(1), k = g.val().dim(2);
    Tensor<T> out(Shape{B, N, N, 2 * k});
    for (long b = 0; b < B; ++b)
        for (long u = 0; u < N; ++u)
            for (long v = 0; v < N; ++v) {
                T* d = out.ptr() + (((b * N + u) * N + v) * 2 * k);
                std::copy_n(g.val().ptr() + (b * N + u) * k, k, d);
                std::copy_n(g.val().ptr() + (b * N + v) * k, k, d + k);
            }
    const bool ng = detail::want(g);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, g, o, B, N, k]() {
            const Tensor<T>& gr = tp.node(o.idx).grad;
            Tensor<T>& gg = tp.grad_buf(g.idx);
            for (long b = 0; b < B; ++b)
                for (long u = 0; u < N; ++u)
                    for (long v = 0; v < N; ++v) {
                        const T* d = gr.ptr() + (((b * N + u) * N + v) * 2 * k);
                        T* gu = gg.ptr() + (b * N + u) * k;
                        T* gv = gg.ptr() + (b * N + v) * k;
                        for (long c = 0; c < k; ++c) {
                            gu[c] += d[c];
                            gv[c] += d[k + c];
                        }
                    }
        };
    return o;
}

/// Elementwise max over the neighbor axis: m [B,N,N,k] (message v->u at
/// [b,u,v,:]), mask [B,N,N] nonzero where v is a neighbor of u. Every u must
/// have at least one neighbor. Gradient routes to the first argmax.
template <typename T>
Var<T> max_pairs(Var<T> m, std::shared_ptr<Tensor<uint8_t>> mask) {
    Tape<T>& tp = *m.tape;
    const long B = m.val().dim(0), N = m.val().dim(1), k = m.val().dim(3);
    Tensor<T> out(Shape{B, N, k});
    auto arg = std::make_shared<Tensor<long>>(Shape{B, N, k});
    for (long b = 0; b < B; ++b)
        for (long u = 0; u < N; ++u) {
            bool any = false;
            for (long c = 0; c < k; ++c) out.at((b * N + u) * k + c) = std::numeric_limits<T>::lowest();
            for (long v = 0; v < N; ++v) {
                if (!mask->at((b * N + u) * N + v)) continue;
                any = true;
                const T* src = m.val().ptr() + (((b * N + u) * N + v) * k);
                for (long c = 0; c < k; ++c) {
                    if (src[c] > out.at((b * N + u) * k + c)) {
                        out.at((b * N + u) * k + c) = src[c];
                        arg->at((b * N + u) * k + c) = v;
                    }
                }
            }
            if (!any) throw std::logic_error("max_pairs: node with empty neighborhood");
        }
    const bool ng = detail::want(m);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, m, o, arg, B, N, k]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            Tensor<T>& gm = tp.grad_buf(m.idx);
            for (long b = 0; b < B; ++b)
                for (long u = 0; u < N; ++u)
                    for (long c = 0; c < k; ++c) {
                        const long v = arg->at((b * N + u) * k + c);
                        gm.at((((b * N + u) * N + v) * k) + c) += g.at((b * N + u) * k + c);
                    }
        };
    return o;
}

/// Mean over axis 1: [B,N,k] -> [B,k].
template <typename T>
Var<T> mean_axis1(Var<T> x) {
    Tape<T>& tp = *x.tape;
    const long B = x.val().dim(0), N = x.val().dim(1), k = x.val().dim(2);
    Tensor<T> out = Tensor<T>::zeros(Shape{B, k});
    for (long b = 0; b < B; ++b)
        for (long n = 0; n < N; ++n)
            for (long c = 0; c < k; ++c) out.at(b * k + c) += x.val().at((b * N + n) * k + c) / static_cast<T>(N);
    const bool ng = detail::want(x);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, x, o, B, N, k]() {
            const Tensor<T>& g = tp.node(o.idx).grad;
            Tensor<T> gx(x.val().shape);
            for (long b = 0; b < B; ++b)
                for (long n = 0; n < N; ++n)
                    for (long c = 0; c < k; ++c) gx.at((b * N + n) * k + c) = g.at(b * k + c) / static_cast<T>(N);
            tp.accum(x.idx, gx);
        };
    return o;
}

/// Sum of all elements -> scalar (double accumulator).
template <typename T>
Var<T> sum_all(Var<T> a) {
    Tape<T>& tp = *a.tape;
    double acc = 0.0;
    for (long i = 0; i < a.val().numel(); ++i) acc += static_cast<double>(a.val().at(i));
    const bool ng = detail::want(a);
    Var<T> o = tp.leaf(Tensor<T>::scalar(static_cast<T>(acc)), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, a, o]() {
            const T g = tp.node(o.idx).grad.at(0);
            Tensor<T> ga = Tensor<T>::full(a.val().shape, g);
            tp.accum(a.idx, ga);
        };
    return o;
}

// ---------------------------------------------------------------------------
// losses (reductions accumulate in double)
// ---------------------------------------------------------------------------

/// Mean masked cross-entropy. logits [M,C], targets [M] in [0,C), mask [M]
/// (empty = all ones). Returns scalar.
template <typename T>
Var<T> ce_loss(Var<T> logits, std::shared_ptr<Tensor<long>> targets, std::shared_ptr<Tensor<T>> mask) {
    Tape<T>& tp = *logits.tape;
    const long M = logits.val().rows(), C = logits.val().cols();
    auto probs = std::make_shared<Tensor<T>>(Shape{M, C});
    double total = 0.0, wsum = 0.0;
    for (long i = 0; i < M; ++i) {
        const double w = mask ? static_cast<double>(mask->at(i)) : 1.0;
        const T* l = logits.val().ptr() + i * C;
        double mx = -std::numeric_limits<double>::infinity();
        for (long c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(l[c]));
        double z = 0.0;
        for (long c = 0; c < C; ++c) z += std::exp(static_cast<double>(l[c]) - mx);
        const double logz = std::log(z) + mx;
        for (long c = 0; c < C; ++c)
            probs->at(i * C + c) = static_cast<T>(std::exp(static_cast<double>(l[c]) - logz));
        if (w != 0.0) {
            const long t = targets->at(i);
            if (t < 0 || t >= C) throw std::out_of_range("ce_loss: target out of range");
            total += w * (logz - static_cast<double>(l[t]));
            wsum += w;
        }
    }
    if (wsum == 0.0) wsum = 1.0;
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / wsum));
    const bool ng = detail::want(logits);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, logits, o, probs, targets, mask, M, C, wsum]() {
            const T gout = tp.node(o.idx).grad.at(0);
            Tensor<T>& gl = tp.grad_buf(logits.idx);
            for (long i = 0; i < M; ++i) {
                const double w = mask ? static_cast<double>(mask->at(i)) : 1.0;
                if (w == 0.0) continue;
                const long t = targets->at(i);
                const double s = static_cast<double>(gout) * w / wsum;
                for (long c = 0; c < C; ++c)
                    gl.at(i * C + c) += static_cast<T>(s * (static_cast<double>(probs->at(i * C + c)) -
                                                            (c == t ? 1.0 : 0.0)));
            }
        };
    return o;
}

/// Mean masked binary cross-entropy with logits. logits [M], targets [M] in {0,1}.
template <typename T>
Var<T> bce_loss(Var<T> logits, std::shared_ptr<Tensor<T>> targets, std::shared_ptr<Tensor<T>> mask) {
    Tape<T>& tp = *logits.tape;
    const long M = logits.val().numel();
    double total = 0.0, wsum = 0.0;
    for (long i = 0; i < M; ++i) {
        const double w = mask ? static_cast<double>(mask->at(i)) : 1.0;
        if (w == 0.0) continue;
        const double x = static_cast<double>(logits.val().at(i));
        const double t = static_cast<double>(targets->at(i));
        total += w * (std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x))));
        wsum += w;
    }
    if (wsum == 0.0) wsum = 1.0;
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / wsum));
    const bool ng = detail::want(logits);
    Var<T> o = tp.leaf(std::move(out), ng);
    if (ng)
        tp.node(o.idx).back = [&tp, logits, o, targets, mask, M, wsum]() {
            const T gout = tp.node(o.idx).grad.at(0);
            Tensor<T>& gl = tp.grad_buf(logits.idx);
            for (long i = 0; i < M; ++i) {
                const double w = mask ? static_cast<double>(mask->at(i)) : 1.0;
                if (w == 0.0) continue;
                const double x = static_cast<double>(logits.val().at(i));
                const double sig = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
                gl.at(i) += static_cast<T>(static_cast<double>(gout) * w / wsum *
                                           (sig - static_cast<double>(targets->at(i))));
            }
        };
    return o;
}

}  // namespace transnar::ad
