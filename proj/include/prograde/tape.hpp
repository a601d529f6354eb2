#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "prograde/kernels.hpp"
#include "prograde/tensor.hpp"

namespace prograde {

/// Handle to a value recorded on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

namespace detail {

enum class Op : std::uint8_t {
    kLeaf, kConstant,
    kAdd, kSub, kMul, kDiv, kNeg, kScale, kAddScalar,
    kSqrt, kExp, kLog, kTanh, kLeakyRelu,
    kConv2d, kUpsample2x, kAvgpool2x,
    kSumAxes, kBroadcast, kReshape, kSwap01, kFlipHw,
    kConcatCh, kSliceCh,
    kCustom,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::kLeaf: return "leaf";
        case Op::kConstant: return "constant";
        case Op::kAdd: return "add";
        case Op::kSub: return "sub";
        case Op::kMul: return "mul";
        case Op::kDiv: return "div";
        case Op::kNeg: return "neg";
        case Op::kScale: return "scale";
        case Op::kAddScalar: return "add_scalar";
        case Op::kSqrt: return "sqrt";
        case Op::kExp: return "exp";
        case Op::kLog: return "log";
        case Op::kTanh: return "tanh";
        case Op::kLeakyRelu: return "leaky_relu";
        case Op::kConv2d: return "conv2d";
        case Op::kUpsample2x: return "upsample2x";
        case Op::kAvgpool2x: return "avgpool2x";
        case Op::kSumAxes: return "sum_axes";
        case Op::kBroadcast: return "broadcast_to";
        case Op::kReshape: return "reshape";
        case Op::kSwap01: return "swap01";
        case Op::kFlipHw: return "flip_hw";
        case Op::kConcatCh: return "concat_channels";
        case Op::kSliceCh: return "slice_channels";
        case Op::kCustom: return "custom";
    }
    return "?";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse-mode tape. Recording is an append-only Wengert list; backward()
// emits the VJP of every recorded primitive as further tape operations, so
// gradients are themselves recorded values and a second backward pass
// differentiates through them. That closure is what the gradient-norm
// penalty needs.
// ---------------------------------------------------------------------------

template <typename T>
class Tape {
  public:
    struct CustomOp {
        std::function<Tensor<T>(const Tensor<T>&)> forward;
        // Receives (tape, upstream grad, input var, output var).
        std::function<Var(Tape&, Var, Var, Var)> vjp;
    };

    explicit Tape(bool debug_checks = false) : debug_checks_(debug_checks) {}

    bool debug_checks() const { return debug_checks_; }
    void set_debug_checks(bool on) { debug_checks_ = on; }
    std::size_t size() const { return nodes_.size(); }

    // By value: recording reallocates node storage, so references into it
    // would not survive the next op. Tensor copies share their buffer.
    Tensor<T> value(Var v) const { return node(v.id).val; }
    Shape shape(Var v) const { return node(v.id).val.shape(); }

    /// Differentiable input (network parameter or penalty interpolate).
    Var leaf(Tensor<T> t) { return push(detail::Op::kLeaf, {-1, -1}, std::move(t), /*diff=*/true); }

    /// Non-differentiable input (data batches, masks, noise draws).
    Var constant(Tensor<T> t) { return push(detail::Op::kConstant, {-1, -1}, std::move(t), /*diff=*/false); }

    Var constant_scalar(T v) { return constant(Tensor<T>::full({1}, v)); }

    Var zeros_like(Var v) { return constant(Tensor<T>::zeros(shape(v))); }
    Var ones_like(Var v) { return constant(Tensor<T>::full(shape(v), T(1))); }

    // -- elementwise ---------------------------------------------------------

    Var add(Var a, Var b) { return binary(detail::Op::kAdd, a, b); }
    Var sub(Var a, Var b) { return binary(detail::Op::kSub, a, b); }
    Var mul(Var a, Var b) { return binary(detail::Op::kMul, a, b); }
    Var div(Var a, Var b) { return binary(detail::Op::kDiv, a, b); }
    Var neg(Var a) { return unary(detail::Op::kNeg, a); }
    Var square(Var a) { return mul(a, a); }

    Var scale(Var a, T c) {
        Node n = make_unary(detail::Op::kScale, a);
        n.scalar = c;
        return finish(std::move(n));
    }

    Var add_scalar(Var a, T c) {
        Node n = make_unary(detail::Op::kAddScalar, a);
        n.scalar = c;
        return finish(std::move(n));
    }

    /// Elementwise square root. `grad_guard` is added to the radicand in the
    /// backward rule only, bounding the derivative near zero while leaving
    /// forward values exact.
    Var sqrt(Var a, T grad_guard = T(0)) {
        Node n = make_unary(detail::Op::kSqrt, a);
        n.scalar = grad_guard;
        return finish(std::move(n));
    }

    Var exp(Var a) { return unary(detail::Op::kExp, a); }
    Var log(Var a) { return unary(detail::Op::kLog, a); }
    Var tanh(Var a) { return unary(detail::Op::kTanh, a); }

    Var leaky_relu(Var a, T leakiness) {
        check(leakiness >= T(0) && leakiness < T(1), "leaky_relu: leakiness must be in [0,1)");
        Node n = make_unary(detail::Op::kLeakyRelu, a);
        n.scalar = leakiness;
        return finish(std::move(n));
    }

    Var relu(Var a) { return leaky_relu(a, T(0)); }

    // -- structure -----------------------------------------------------------

    Var reshape(Var a, Shape target) {
        check(shape(a).numel() == target.numel(),
              "reshape: numel mismatch " + shape(a).str() + " -> " + target.str());
        Node n = make_unary(detail::Op::kReshape, a);
        n.target = target;
        return finish(std::move(n));
    }

    Var broadcast_to(Var a, Shape target) {
        if (shape(a) == target) return a;
        Node n = make_unary(detail::Op::kBroadcast, a);
        n.target = target;
        return finish(std::move(n));
    }

    /// Sum over rank-4-padded axes in `axes_mask` (bit i = axis i); summed
    /// axes keep extent 1.
    Var sum_axes(Var a, unsigned axes_mask) {
        Node n = make_unary(detail::Op::kSumAxes, a);
        n.mask = axes_mask;
        return finish(std::move(n));
    }

    Var sum_all(Var a) { return reshape(sum_axes(a, 0xFu), Shape{1}); }

    Var mean_all(Var a) {
        const std::int64_t n = shape(a).numel();
        return scale(sum_all(a), T(1) / static_cast<T>(n));
    }

    Var swap01(Var a) { return unary(detail::Op::kSwap01, a); }
    Var flip_hw(Var a) { return unary(detail::Op::kFlipHw, a); }

    Var concat_channels(Var a, Var b) {
        Node n;
        n.op = detail::Op::kConcatCh;
        n.in = {a.id, b.id};
        return finish(std::move(n));
    }

    Var slice_channels(Var a, int c0, int c1) {
        Node n = make_unary(detail::Op::kSliceCh, a);
        n.c0 = c0;
        n.c1 = c1;
        return finish(std::move(n));
    }

    // -- image primitives ----------------------------------------------------

    Var conv2d(Var x, Var w, int padding) {
        check(padding >= 0, "conv2d: negative padding");
        Node n;
        n.op = detail::Op::kConv2d;
        n.in = {x.id, w.id};
        n.c0 = padding;
        return finish(std::move(n));
    }

    Var upsample2x(Var a) { return unary(detail::Op::kUpsample2x, a); }
    Var avgpool2x(Var a) { return unary(detail::Op::kAvgpool2x, a); }

    /// Test/extension hook: unary op with caller-supplied forward and VJP.
    Var custom(Var a, typename Tape::CustomOp op) {
        Node n = make_unary(detail::Op::kCustom, a);
        n.custom = std::make_shared<CustomOp>(std::move(op));
        return finish(std::move(n));
    }

    // -- differentiation -----------------------------------------------------

    /// Reverse accumulation from a scalar loss to each var in `wrt`.
    /// Gradients are recorded on this tape, so a further backward() can
    /// differentiate any scalar function of them. When `keep_graph` is false
    /// the tape is marked consumed and a later backward() is an error.
    std::vector<Var> backward(Var loss, std::span<const Var> wrt, bool keep_graph = false) {
        check(!consumed_, "backward: graph already consumed; re-record before differentiating again");
        check(loss.valid() && loss.id < static_cast<int>(nodes_.size()), "backward: invalid loss var");
        check(node(loss.id).val.numel() == 1, "backward: loss must be scalar, got shape " + shape(loss).str());
        if (!keep_graph) consumed_ = true;

        const int n_at_entry = static_cast<int>(nodes_.size());
        std::vector<char> needed(n_at_entry, 0);
        for (Var w : wrt) {
            check(w.valid() && w.id < n_at_entry, "backward: invalid wrt var");
            needed[w.id] = 1;
        }
        for (int u = 0; u < n_at_entry; ++u) {
            if (needed[u]) continue;
            const Node& nd = nodes_[u];
            for (int in : nd.in)
                if (in >= 0 && needed[in]) { needed[u] = 1; break; }
        }

        std::vector<int> adj(n_at_entry, -1);
        adj[loss.id] = constant(Tensor<T>::full(shape(loss), T(1))).id;

        for (int u = loss.id; u >= 0; --u) {
            if (adj[u] < 0 || !needed[u]) continue;
            propagate(u, Var{adj[u]}, needed, adj);
        }

        std::vector<Var> grads;
        grads.reserve(wrt.size());
        for (Var w : wrt) {
            if (adj[w.id] >= 0) grads.push_back(Var{adj[w.id]});
            else grads.push_back(constant(Tensor<T>::zeros(shape(w))));
        }
        return grads;
    }

    std::vector<Var> backward(Var loss, std::initializer_list<Var> wrt, bool keep_graph = false) {
        std::vector<Var> v(wrt);
        return backward(loss, std::span<const Var>(v), keep_graph);
    }

    /// Re-executes the recorded list from leaf values and verifies that every
    /// node reproduces its stored value bit-exactly.
    bool replay_matches() const {
        std::vector<Tensor<T>> vals(nodes_.size());
        for (std::size_t u = 0; u < nodes_.size(); ++u) {
            const Node& nd = nodes_[u];
            if (nd.op == detail::Op::kLeaf || nd.op == detail::Op::kConstant) {
                vals[u] = nd.val;
                continue;
            }
            vals[u] = eval(nd, nd.in[0] >= 0 ? &vals[nd.in[0]] : nullptr,
                           nd.in[1] >= 0 ? &vals[nd.in[1]] : nullptr);
            if (!vals[u].bit_equal(nd.val)) return false;
        }
        return true;
    }

  private:
    struct Node {
        detail::Op op = detail::Op::kConstant;
        std::array<int, 2> in{-1, -1};
        Tensor<T> val;
        T scalar{};
        unsigned mask = 0;
        Shape target;
        int c0 = 0, c1 = 0;
        bool diff = false;
        std::shared_ptr<CustomOp> custom;
    };

    const Node& node(int id) const { return nodes_[id]; }

    Node make_unary(detail::Op op, Var a) {
        check(a.valid() && a.id < static_cast<int>(nodes_.size()), "tape: invalid input var");
        Node n;
        n.op = op;
        n.in = {a.id, -1};
        return n;
    }

    Var unary(detail::Op op, Var a) { return finish(make_unary(op, a)); }

    Var binary(detail::Op op, Var a, Var b) {
        const Shape& sa = shape(a);
        const Shape& sb = shape(b);
        if (sa != sb) {
            Shape t = broadcast_shapes(sa, sb);
            a = broadcast_to(a, t);
            b = broadcast_to(b, t);
        }
        Node n;
        n.op = op;
        n.in = {a.id, b.id};
        return finish(std::move(n));
    }

    Var finish(Node n) {
        const Tensor<T>* a = n.in[0] >= 0 ? &nodes_[n.in[0]].val : nullptr;
        const Tensor<T>* b = n.in[1] >= 0 ? &nodes_[n.in[1]].val : nullptr;
        n.val = eval(n, a, b);
        n.diff = (n.in[0] >= 0 && nodes_[n.in[0]].diff) || (n.in[1] >= 0 && nodes_[n.in[1]].diff);
        return push_node(std::move(n));
    }

    Var push(detail::Op op, std::array<int, 2> in, Tensor<T> val, bool diff) {
        Node n;
        n.op = op;
        n.in = in;
        n.val = std::move(val);
        n.diff = diff;
        return push_node(std::move(n));
    }

    Var push_node(Node n) {
        if (debug_checks_ && !n.val.all_finite())
            raise(std::string("non-finite values after primitive '") + detail::op_name(n.op) + "'");
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size() - 1)};
    }

    Tensor<T> eval(const Node& n, const Tensor<T>* a, const Tensor<T>* b) const {
        using detail::Op;
        switch (n.op) {
            case Op::kAdd: return zip(*a, *b, [](T x, T y) { return x + y; });
            case Op::kSub: return zip(*a, *b, [](T x, T y) { return x - y; });
            case Op::kMul: return zip(*a, *b, [](T x, T y) { return x * y; });
            case Op::kDiv: return zip(*a, *b, [](T x, T y) { return x / y; });
            case Op::kNeg: return map(*a, [](T x) { return -x; });
            case Op::kScale: {
                const T c = n.scalar;
                return map(*a, [c](T x) { return x * c; });
            }
            case Op::kAddScalar: {
                const T c = n.scalar;
                return map(*a, [c](T x) { return x + c; });
            }
            case Op::kSqrt: return map(*a, [](T x) { return std::sqrt(x); });
            case Op::kExp: return map(*a, [](T x) { return std::exp(x); });
            case Op::kLog: return map(*a, [](T x) { return std::log(x); });
            case Op::kTanh: return map(*a, [](T x) { return std::tanh(x); });
            case Op::kLeakyRelu: {
                const T s = n.scalar;
                return map(*a, [s](T x) { return x >= T(0) ? x : s * x; });
            }
            case Op::kConv2d: return kernels::conv2d(*a, *b, n.c0);
            case Op::kUpsample2x: return kernels::upsample2x(*a);
            case Op::kAvgpool2x: return kernels::avgpool2x(*a);
            case Op::kSumAxes: return kernels::sum_axes(*a, n.mask);
            case Op::kBroadcast: return kernels::broadcast_to(*a, n.target);
            case Op::kReshape: {
                Tensor<T> t = a->clone();
                return Tensor<T>::from(n.target, std::move(t.raw()));
            }
            case Op::kSwap01: return kernels::swap01(*a);
            case Op::kFlipHw: return kernels::flip_hw(*a);
            case Op::kConcatCh: return kernels::concat_channels(*a, *b);
            case Op::kSliceCh: return kernels::slice_channels(*a, n.c0, n.c1);
            case Op::kCustom: return n.custom->forward(*a);
            case Op::kLeaf:
            case Op::kConstant: break;
        }
        raise("tape: cannot evaluate leaf/constant");
    }

    static constexpr std::int64_t kElementwiseChunk = 1 << 16;

    template <typename F>
    static Tensor<T> map(const Tensor<T>& x, F f) {
        Tensor<T> out = Tensor<T>::uninitialized(x.shape());
        const T* src = x.data();
        T* dst = out.mutable_data();
        const std::int64_t n = x.numel();
        parallel_for((n + kElementwiseChunk - 1) / kElementwiseChunk, [&](std::int64_t chunk) {
            const std::int64_t b = chunk * kElementwiseChunk;
            const std::int64_t e = std::min(n, b + kElementwiseChunk);
            for (std::int64_t i = b; i < e; ++i) dst[i] = f(src[i]);
        });
        return out;
    }

    template <typename F>
    static Tensor<T> zip(const Tensor<T>& x, const Tensor<T>& y, F f) {
        check(x.shape() == y.shape(), "elementwise: shape mismatch " + x.shape().str() + " vs " + y.shape().str());
        Tensor<T> out = Tensor<T>::uninitialized(x.shape());
        const T* sx = x.data();
        const T* sy = y.data();
        T* dst = out.mutable_data();
        const std::int64_t n = x.numel();
        parallel_for((n + kElementwiseChunk - 1) / kElementwiseChunk, [&](std::int64_t chunk) {
            const std::int64_t b = chunk * kElementwiseChunk;
            const std::int64_t e = std::min(n, b + kElementwiseChunk);
            for (std::int64_t i = b; i < e; ++i) dst[i] = f(sx[i], sy[i]);
        });
        return out;
    }

    void accumulate(int target, Var contribution, std::vector<int>& adj) {
        if (adj[target] < 0) adj[target] = contribution.id;
        else adj[target] = add(Var{adj[target]}, contribution).id;
    }

    void propagate(int u, Var g, const std::vector<char>& needed, std::vector<int>& adj) {
        using detail::Op;
        const Node nd = nodes_[u];  // copy: emitting VJP ops reallocates nodes_
        const int ia = nd.in[0], ib = nd.in[1];
        const bool wa = ia >= 0 && needed[ia] && nodes_[ia].diff;
        const bool wb = ib >= 0 && needed[ib] && nodes_[ib].diff;
        if (!wa && !wb) return;
        Var a{ia}, b{ib}, y{u};

        switch (nd.op) {
            case Op::kAdd:
                if (wa) accumulate(ia, g, adj);
                if (wb) accumulate(ib, g, adj);
                return;
            case Op::kSub:
                if (wa) accumulate(ia, g, adj);
                if (wb) accumulate(ib, neg(g), adj);
                return;
            case Op::kMul:
                if (wa) accumulate(ia, mul(g, b), adj);
                if (wb) accumulate(ib, mul(g, a), adj);
                return;
            case Op::kDiv:
                if (wa) accumulate(ia, div(g, b), adj);
                if (wb) accumulate(ib, neg(div(mul(g, a), mul(b, b))), adj);
                return;
            case Op::kNeg: accumulate(ia, neg(g), adj); return;
            case Op::kScale: accumulate(ia, scale(g, nd.scalar), adj); return;
            case Op::kAddScalar: accumulate(ia, g, adj); return;
            case Op::kSqrt: {
                // d sqrt(x) = g / (2 sqrt(x + guard)); guard bounds the slope
                // at x = 0 without touching the forward value.
                Var den = nd.scalar > T(0) ? sqrt(add_scalar(a, nd.scalar)) : y;
                accumulate(ia, scale(div(g, den), T(0.5)), adj);
                return;
            }
            case Op::kExp: accumulate(ia, mul(g, y), adj); return;
            case Op::kLog: accumulate(ia, div(g, a), adj); return;
            case Op::kTanh: accumulate(ia, mul(g, add_scalar(neg(square(y)), T(1))), adj); return;
            case Op::kLeakyRelu: {
                const T s = nd.scalar;
                Tensor<T> mask = map(nodes_[ia].val, [s](T x) { return x >= T(0) ? T(1) : s; });
                accumulate(ia, mul(g, constant(std::move(mask))), adj);
                return;
            }
            case Op::kConv2d: {
                const int pad = nd.c0;
                const int k = nodes_[ib].val.shape()[2];
                if (wa) accumulate(ia, conv2d(g, flip_hw(swap01(b)), k - 1 - pad), adj);
                if (wb) accumulate(ib, swap01(conv2d(swap01(a), swap01(g), pad)), adj);
                return;
            }
            case Op::kUpsample2x: accumulate(ia, scale(avgpool2x(g), T(4)), adj); return;
            case Op::kAvgpool2x: accumulate(ia, scale(upsample2x(g), T(0.25)), adj); return;
            case Op::kSumAxes: accumulate(ia, broadcast_to(g, nodes_[ia].val.shape()), adj); return;
            case Op::kBroadcast: {
                const Shape in4 = kernels::pad_to_rank4(nodes_[ia].val.shape());
                const Shape out4 = kernels::pad_to_rank4(nd.target);
                unsigned mask = 0;
                for (int ax = 0; ax < 4; ++ax)
                    if (in4.dim[ax] == 1 && out4.dim[ax] > 1) mask |= 1u << ax;
                Var red = mask ? sum_axes(g, mask) : g;
                accumulate(ia, reshape(red, nodes_[ia].val.shape()), adj);
                return;
            }
            case Op::kReshape: accumulate(ia, reshape(g, nodes_[ia].val.shape()), adj); return;
            case Op::kSwap01: accumulate(ia, swap01(g), adj); return;
            case Op::kFlipHw: accumulate(ia, flip_hw(g), adj); return;
            case Op::kConcatCh: {
                const int ca = nodes_[ia].val.shape()[1];
                const int cb = nodes_[ib].val.shape()[1];
                if (wa) accumulate(ia, slice_channels(g, 0, ca), adj);
                if (wb) accumulate(ib, slice_channels(g, ca, ca + cb), adj);
                return;
            }
            case Op::kSliceCh: {
                const Shape s = nodes_[ia].val.shape();
                Var padded = g;
                if (nd.c0 > 0)
                    padded = concat_channels(constant(Tensor<T>::zeros({s[0], nd.c0, s[2], s[3]})), padded);
                if (nd.c1 < s[1])
                    padded = concat_channels(padded, constant(Tensor<T>::zeros({s[0], s[1] - nd.c1, s[2], s[3]})));
                accumulate(ia, padded, adj);
                return;
            }
            case Op::kCustom: accumulate(ia, nd.custom->vjp(*this, g, a, y), adj); return;
            case Op::kLeaf:
            case Op::kConstant: return;
        }
    }

    std::vector<Node> nodes_;
    bool debug_checks_ = false;
    bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Central-difference verification of recorded functions.
// ---------------------------------------------------------------------------

/// `f` maps (tape, leaf vars) to a scalar var. Returns the worst relative
/// error |analytic - numeric| / max(1e-8, |analytic| + |numeric|) over every
/// element of every parameter tensor.
template <typename T, typename F>
double gradient_check(F&& f, const std::vector<Tensor<T>>& points, T step) {
    check(step > T(0), "gradient_check: step must be positive");

    auto eval_at = [&](const std::vector<Tensor<T>>& params) {
        Tape<T> tape(true);
        std::vector<Var> leaves;
        leaves.reserve(params.size());
        for (const auto& p : params) leaves.push_back(tape.leaf(p.clone()));
        Var loss = f(tape, std::span<const Var>(leaves));
        const T v = tape.value(loss).scalar();
        check(is_finite_value(v), "gradient_check: non-finite evaluation");
        return v;
    };

    // Analytic gradients.
    Tape<T> tape(true);
    std::vector<Var> leaves;
    for (const auto& p : points) leaves.push_back(tape.leaf(p.clone()));
    Var loss = f(tape, std::span<const Var>(leaves));
    std::vector<Var> grads = tape.backward(loss, std::span<const Var>(leaves), true);

    double worst = 0;
    std::vector<Tensor<T>> probe;
    for (const auto& p : points) probe.push_back(p.clone());
    for (std::size_t pi = 0; pi < points.size(); ++pi) {
        const Tensor<T>& grad = tape.value(grads[pi]);
        for (std::int64_t e = 0; e < points[pi].numel(); ++e) {
            const T saved = probe[pi].data()[e];
            probe[pi].mutable_data()[e] = saved + step;
            const double f_plus = eval_at(probe);
            probe[pi].mutable_data()[e] = saved - step;
            const double f_minus = eval_at(probe);
            probe[pi].mutable_data()[e] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * static_cast<double>(step));
            const double analytic = static_cast<double>(grad.data()[e]);
            const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            worst = std::max(worst, std::abs(analytic - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace prograde
