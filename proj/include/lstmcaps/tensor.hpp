#pragma once

// Dense f64 tensors with tape-based reverse-mode automatic differentiation.
//
// A Graph is a flat tape: every differentiable op appends one node holding a
// backward closure. backward(loss) seeds d(loss)/d(loss)=1 and replays the
// tape in exact reverse recording order; closures accumulate (+=) into input
// gradients, so a tensor used on several paths receives the sum. Ops called
// with a null Graph, or whose inputs carry no gradient requirement, just
// compute the forward value.
//
// Layout is row-major; binary elementwise ops broadcast by the trailing-
// dimension rule (align shapes right, each dim equal or 1). All arithmetic is
// sequential and double precision, so identical graphs on identical inputs
// give bitwise-identical results.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lstmcaps/common.hpp"

namespace lstmcaps {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) { return size_list_str(s); }

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::int64_t id = 0;
};

inline std::int64_t next_tensor_id() {
    static std::atomic<std::int64_t> counter{0};
    return ++counter;
}

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> value, bool requires_grad = false)
        : p_(std::make_shared<detail::TensorNode>()) {
        if (shape.empty()) throw shape_error("tensor rank must be >= 1");
        for (std::size_t d : shape)
            if (d == 0) throw shape_error("tensor dimensions must be >= 1");
        if (shape_numel(shape) != value.size())
            throw shape_error("tensor data length " + std::to_string(value.size()) +
                              " does not match shape " + shape_str(shape));
        p_->shape = std::move(shape);
        p_->value = std::move(value);
        p_->requires_grad = requires_grad;
        p_->id = detail::next_tensor_id();
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
    }

    static Tensor full(Shape shape, double fill, bool requires_grad = false) {
        std::size_t n = shape_numel(shape);
        return Tensor(std::move(shape), std::vector<double>(n, fill), requires_grad);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    static Tensor row(std::vector<double> v, bool requires_grad = false) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v), requires_grad);
    }

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    std::size_t rank() const { return p_->shape.size(); }
    std::size_t size() const { return p_->value.size(); }
    std::size_t dim(std::size_t i) const { return p_->shape[i]; }
    std::int64_t id() const { return p_->id; }
    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool rg) { p_->requires_grad = rg; }

    std::vector<double>& value() { return p_->value; }
    const std::vector<double>& value() const { return p_->value; }

    bool has_grad() const { return !p_->grad.empty(); }

    /// Gradient buffer, allocated (zero-filled) on first access.
    std::vector<double>& grad() {
        if (p_->grad.empty()) p_->grad.assign(p_->value.size(), 0.0);
        return p_->grad;
    }
    const std::vector<double>& grad_view() const { return p_->grad; }

    void zero_grad() {
        if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
    }

    /// Deep copy with a fresh identity (no tape history).
    Tensor clone() const {
        Tensor t(p_->shape, p_->value, p_->requires_grad);
        return t;
    }

    bool same_node(const Tensor& o) const { return p_ == o.p_; }

private:
    std::shared_ptr<detail::TensorNode> p_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

class Graph {
public:
    void record(const char* op, std::function<void()> backward_fn) {
        nodes_.push_back({op, std::move(backward_fn)});
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate additively;
    /// callers zero parameter grads between optimisation steps.
    void backward(Tensor loss) {
        if (loss.size() != 1)
            throw contract_error("backward: loss must be a scalar, got shape " +
                                 shape_str(loss.shape()));
        loss.grad()[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
    }

    std::size_t node_count() const { return nodes_.size(); }

    bool contains_op(const std::string& name) const {
        for (const auto& n : nodes_)
            if (name == n.op) return true;
        return false;
    }

    std::vector<std::string> op_names() const {
        std::vector<std::string> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.emplace_back(n.op);
        return out;
    }

    void clear() { nodes_.clear(); }

private:
    struct Node {
        const char* op;
        std::function<void()> fn;
    };
    std::vector<Node> nodes_;
};

namespace detail {

inline bool tracked(const Graph* g, std::initializer_list<const Tensor*> inputs) {
    if (!g) return false;
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Trailing-dimension broadcast: shapes are right-aligned; each pair of dims
// must be equal or one of them 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw shape_error("shapes " + shape_str(a) + " and " + shape_str(b) +
                              " are not broadcastable");
        out[i] = std::max(da, db);
    }
    return out;
}

// Row-major strides with 0 on broadcast dimensions, right-aligned to `out`.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t offset = out.size() - in.size();
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        strides[offset + i] = (in[i] == 1 && out[offset + i] != 1) ? 0 : s;
        s *= in[i];
    }
    return strides;
}

// Iterates an output shape while tracking two broadcast input offsets.
template <class Fn>
inline void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                               const std::vector<std::size_t>& sb, Fn&& fn) {
    std::size_t n = shape_numel(out);
    std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t lin = 0; lin < n; ++lin) {
        fn(lin, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < out[d]) break;
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

// fwd(a,b) -> value; da(b_val, gout) and db(a_val, gout) -> grad contributions.
template <class F, class DA, class DB>
Tensor binary_elementwise(Graph* g, const char* name, const Tensor& a, const Tensor& b, F fwd,
                          DA da, DB db) {
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    auto sa = broadcast_strides(a.shape(), out_shape);
    auto sb = broadcast_strides(b.shape(), out_shape);
    std::vector<double> out_v(shape_numel(out_shape));
    {
        const auto& av = a.value();
        const auto& bv = b.value();
        if (a.shape() == b.shape()) {
            for (std::size_t i = 0; i < out_v.size(); ++i) out_v[i] = fwd(av[i], bv[i]);
        } else {
            for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                out_v[o] = fwd(av[ia], bv[ib]);
            });
        }
    }
    bool rec = tracked(g, {&a, &b});
    Tensor out(std::move(out_shape), std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, bc = b, oc = out;
        auto sac = sa, sbc = sb;
        g->record(name, [ac, bc, oc, sac, sbc, da, db]() mutable {
            const auto& gout = oc.grad();
            const auto& av = ac.value();
            const auto& bv = bc.value();
            auto& ga = ac.grad();
            auto& gb = bc.grad();
            if (ac.shape() == bc.shape()) {
                for (std::size_t i = 0; i < gout.size(); ++i) {
                    ga[i] += da(av[i], bv[i], gout[i]);
                    gb[i] += db(av[i], bv[i], gout[i]);
                }
            } else {
                for_each_broadcast(oc.shape(), sac, sbc,
                                   [&](std::size_t o, std::size_t ia, std::size_t ib) {
                                       ga[ia] += da(av[ia], bv[ib], gout[o]);
                                       gb[ib] += db(av[ia], bv[ib], gout[o]);
                                   });
            }
        });
    }
    return out;
}

// Unary op; derivative expressed in terms of the saved output value.
template <class F, class DY>
Tensor unary_elementwise(Graph* g, const char* name, const Tensor& a, F fwd, DY dy) {
    std::vector<double> out_v(a.size());
    const auto& av = a.value();
    for (std::size_t i = 0; i < out_v.size(); ++i) out_v[i] = fwd(av[i]);
    bool rec = tracked(g, {&a});
    Tensor out(a.shape(), std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record(name, [ac, oc, dy]() mutable {
            const auto& gout = oc.grad();
            const auto& yv = oc.value();
            auto& ga = ac.grad();
            for (std::size_t i = 0; i < gout.size(); ++i) ga[i] += dy(yv[i]) * gout[i];
        });
    }
    return out;
}

}  // namespace detail

inline Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        g, "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double go) { return go; }, [](double, double, double go) { return go; });
}

inline Tensor sub(Graph* g, const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        g, "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double go) { return go; },
        [](double, double, double go) { return -go; });
}

inline Tensor mul(Graph* g, const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        g, "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y, double go) { return y * go; },
        [](double x, double, double go) { return x * go; });
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(Graph* g, const Tensor& a) {
    return detail::unary_elementwise(
        g, "sigmoid", a, [](double x) { return sigmoid_scalar(x); },
        [](double y) { return y * (1.0 - y); });
}

inline Tensor tanh(Graph* g, const Tensor& a) {
    return detail::unary_elementwise(
        g, "tanh", a, [](double x) { return std::tanh(x); },
        [](double y) { return 1.0 - y * y; });
}

// ---------------------------------------------------------------------------
// Matrix ops (rank-2)
// ---------------------------------------------------------------------------

inline Tensor matmul(Graph* g, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw shape_error("matmul expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                          shape_str(b.shape()));
    std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw shape_error("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    std::vector<double> out_v(m * n, 0.0);
    {
        const double* av = a.value().data();
        const double* bv = b.value().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double aip = av[i * k + p];
                if (aip == 0.0) continue;
                const double* brow = bv + p * n;
                double* orow = out_v.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
    }
    bool rec = detail::tracked(g, {&a, &b});
    Tensor out(Shape{m, n}, std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, bc = b, oc = out;
        g->record("matmul", [ac, bc, oc, m, k, n]() mutable {
            const auto& go = oc.grad();
            const auto& av = ac.value();
            const auto& bv = bc.value();
            auto& ga = ac.grad();
            auto& gb = bc.grad();
            // ga += go . b^T ; gb += a^T . go
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    double goij = go[i * n + j];
                    if (goij == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) {
                        ga[i * k + p] += goij * bv[p * n + j];
                        gb[p * n + j] += av[i * k + p] * goij;
                    }
                }
        });
    }
    return out;
}

inline Tensor transpose(Graph* g, const Tensor& a) {
    if (a.rank() != 2) throw shape_error("transpose expects rank-2, got " + shape_str(a.shape()));
    std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out_v(m * n);
    const auto& av = a.value();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out_v[j * m + i] = av[i * n + j];
    bool rec = detail::tracked(g, {&a});
    Tensor out(Shape{n, m}, std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record("transpose", [ac, oc, m, n]() mutable {
            const auto& go = oc.grad();
            auto& ga = ac.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class Reduce { sum, mean, max };

/// Without an axis the whole tensor reduces to shape [1]. With an axis, that
/// dimension is dropped (or kept as 1 with keepdims). Max routes its gradient
/// to the first occurrence of the maximum.
inline Tensor reduce(Graph* g, Reduce op, const Tensor& a,
                     std::optional<std::size_t> axis = std::nullopt, bool keepdims = false) {
    const auto& av = a.value();
    bool rec = detail::tracked(g, {&a});

    if (!axis.has_value()) {
        double acc;
        std::size_t arg = 0;
        if (op == Reduce::max) {
            acc = av[0];
            for (std::size_t i = 1; i < av.size(); ++i)
                if (av[i] > acc) acc = av[i], arg = i;
        } else {
            acc = 0.0;
            for (double x : av) acc += x;
            if (op == Reduce::mean) acc /= static_cast<double>(av.size());
        }
        Shape out_shape;
        if (keepdims)
            out_shape.assign(a.rank(), 1);
        else
            out_shape = {1};
        Tensor out(out_shape, {acc}, rec);
        if (rec) {
            Tensor ac = a, oc = out;
            std::size_t n = av.size();
            g->record("reduce", [ac, oc, op, arg, n]() mutable {
                double go = oc.grad()[0];
                auto& ga = ac.grad();
                switch (op) {
                    case Reduce::sum:
                        for (auto& v : ga) v += go;
                        break;
                    case Reduce::mean: {
                        double s = go / static_cast<double>(n);
                        for (auto& v : ga) v += s;
                        break;
                    }
                    case Reduce::max:
                        ga[arg] += go;
                        break;
                }
            });
        }
        return out;
    }

    std::size_t ax = *axis;
    if (ax >= a.rank())
        throw shape_error("reduce axis " + std::to_string(ax) + " out of range for shape " +
                          shape_str(a.shape()));
    std::size_t outer = 1, inner = 1, len = a.dim(ax);
    for (std::size_t i = 0; i < ax; ++i) outer *= a.dim(i);
    for (std::size_t i = ax + 1; i < a.rank(); ++i) inner *= a.dim(i);

    std::vector<double> out_v(outer * inner);
    std::vector<std::size_t> argmax(op == Reduce::max ? outer * inner : 0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
            std::size_t base = o * len * inner + i;
            if (op == Reduce::max) {
                double best = av[base];
                std::size_t bestk = 0;
                for (std::size_t k2 = 1; k2 < len; ++k2) {
                    double x = av[base + k2 * inner];
                    if (x > best) best = x, bestk = k2;
                }
                out_v[o * inner + i] = best;
                argmax[o * inner + i] = bestk;
            } else {
                double s = 0.0;
                for (std::size_t k2 = 0; k2 < len; ++k2) s += av[base + k2 * inner];
                out_v[o * inner + i] = op == Reduce::mean ? s / static_cast<double>(len) : s;
            }
        }

    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (i == ax) {
            if (keepdims) out_shape.push_back(1);
        } else {
            out_shape.push_back(a.dim(i));
        }
    }
    if (out_shape.empty()) out_shape = {1};

    Tensor out(std::move(out_shape), std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record("reduce", [ac, oc, op, outer, inner, len, argmax]() mutable {
            const auto& go = oc.grad();
            auto& ga = ac.grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t i = 0; i < inner; ++i) {
                    double gv = go[o * inner + i];
                    std::size_t base = o * len * inner + i;
                    switch (op) {
                        case Reduce::sum:
                            for (std::size_t k2 = 0; k2 < len; ++k2) ga[base + k2 * inner] += gv;
                            break;
                        case Reduce::mean: {
                            double s = gv / static_cast<double>(len);
                            for (std::size_t k2 = 0; k2 < len; ++k2) ga[base + k2 * inner] += s;
                            break;
                        }
                        case Reduce::max:
                            ga[base + argmax[o * inner + i] * inner] += gv;
                            break;
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

inline Tensor reshape(Graph* g, const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw shape_error("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                          " changes element count");
    bool rec = detail::tracked(g, {&a});
    Tensor out(std::move(shape), a.value(), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record("reshape", [ac, oc]() mutable {
            const auto& go = oc.grad();
            auto& ga = ac.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

inline Tensor slice(Graph* g, const Tensor& a, std::size_t axis, std::size_t start,
                    std::size_t len) {
    if (axis >= a.rank())
        throw shape_error("slice axis " + std::to_string(axis) + " out of range");
    if (len == 0 || start + len > a.dim(axis))
        throw shape_error("slice [" + std::to_string(start) + ", " + std::to_string(start + len) +
                          ") out of range for axis size " + std::to_string(a.dim(axis)));
    std::size_t outer = 1, inner = 1, n = a.dim(axis);
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);

    Shape out_shape = a.shape();
    out_shape[axis] = len;
    std::vector<double> out_v(outer * len * inner);
    const auto& av = a.value();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t k = 0; k < len; ++k)
            std::copy_n(av.data() + (o * n + start + k) * inner, inner,
                        out_v.data() + (o * len + k) * inner);

    bool rec = detail::tracked(g, {&a});
    Tensor out(std::move(out_shape), std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record("slice", [ac, oc, outer, inner, n, start, len]() mutable {
            const auto& go = oc.grad();
            auto& ga = ac.grad();
            for (std::size_t o = 0; o < outer; ++o)
                for (std::size_t k = 0; k < len; ++k) {
                    const double* src = go.data() + (o * len + k) * inner;
                    double* dst = ga.data() + (o * n + start + k) * inner;
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
                }
        });
    }
    return out;
}

inline Tensor concat(Graph* g, const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw contract_error("concat of zero tensors");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw shape_error("concat axis out of range");
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != ref.size()) throw shape_error("concat rank mismatch");
        for (std::size_t i = 0; i < ref.size(); ++i)
            if (i != axis && p.dim(i) != ref[i])
                throw shape_error("concat shapes disagree off-axis: " + shape_str(ref) + " vs " +
                                  shape_str(p.shape()));
        total += p.dim(axis);
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
    for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];

    Shape out_shape = ref;
    out_shape[axis] = total;
    std::vector<double> out_v(outer * total * inner);
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        std::size_t len = p.dim(axis);
        const auto& pv = p.value();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(pv.data() + o * len * inner, len * inner,
                        out_v.data() + (o * total + offset) * inner);
        offset += len;
    }

    bool rec = g != nullptr;
    if (rec) {
        rec = false;
        for (const Tensor& p : parts) rec = rec || p.requires_grad();
    }
    Tensor out(std::move(out_shape), std::move(out_v), rec);
    if (rec) {
        std::vector<Tensor> pc = parts;
        Tensor oc = out;
        g->record("concat", [pc, oc, outer, inner, total, axis]() mutable {
            const auto& go = oc.grad();
            std::size_t offset2 = 0;
            for (Tensor& p : pc) {
                std::size_t len = p.dim(axis);
                auto& gp = p.grad();
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = go.data() + (o * total + offset2) * inner;
                    double* dst = gp.data() + o * len * inner;
                    for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
                }
                offset2 += len;
            }
        });
    }
    return out;
}

/// [B,d] -> [B,n,d] by repetition; backward sums the n copies.
inline Tensor repeat_rows(Graph* g, const Tensor& v, std::size_t n) {
    if (n == 0) throw contract_error("repeat count must be >= 1");
    if (v.rank() != 2) throw shape_error("repeat_rows expects [batch, dim], got " + shape_str(v.shape()));
    std::size_t b = v.dim(0), d = v.dim(1);
    std::vector<double> out_v(b * n * d);
    const auto& vv = v.value();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t r = 0; r < n; ++r)
            std::copy_n(vv.data() + i * d, d, out_v.data() + (i * n + r) * d);
    bool rec = detail::tracked(g, {&v});
    Tensor out(Shape{b, n, d}, std::move(out_v), rec);
    if (rec) {
        Tensor vc = v, oc = out;
        g->record("repeat", [vc, oc, b, n, d]() mutable {
            const auto& go = oc.grad();
            auto& gv = vc.grad();
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t r = 0; r < n; ++r) {
                    const double* src = go.data() + (i * n + r) * d;
                    double* dst = gv.data() + i * d;
                    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / squash / capsule primitives
// ---------------------------------------------------------------------------

inline Tensor softmax_last(Graph* g, const Tensor& a) {
    std::size_t d = a.dim(a.rank() - 1);
    std::size_t rows = a.size() / d;
    std::vector<double> out_v(a.size());
    const auto& av = a.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = av.data() + r * d;
        double* y = out_v.data() + r * d;
        double mx = x[0];
        for (std::size_t i = 1; i < d; ++i) mx = std::max(mx, x[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += (y[i] = std::exp(x[i] - mx));
        for (std::size_t i = 0; i < d; ++i) y[i] /= s;
    }
    bool rec = detail::tracked(g, {&a});
    Tensor out(a.shape(), std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record("softmax", [ac, oc, rows, d]() mutable {
            const auto& go = oc.grad();
            const auto& y = oc.value();
            auto& ga = ac.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double dot = 0.0;
                for (std::size_t i = 0; i < d; ++i) dot += go[r * d + i] * y[r * d + i];
                for (std::size_t i = 0; i < d; ++i)
                    ga[r * d + i] += y[r * d + i] * (go[r * d + i] - dot);
            }
        });
    }
    return out;
}

/// Capsule activation, applied to each last-axis vector s:
///   v = (|s|^2 / (1+|s|^2)) * s/|s|,  v = 0 at s = 0.
/// |v| < 1 always and v keeps the direction of s.
inline Tensor squash(Graph* g, const Tensor& a) {
    std::size_t d = a.dim(a.rank() - 1);
    std::size_t rows = a.size() / d;
    std::vector<double> out_v(a.size());
    std::vector<double> norms(rows);
    const auto& av = a.value();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* s = av.data() + r * d;
        double n2 = 0.0;
        for (std::size_t i = 0; i < d; ++i) n2 += s[i] * s[i];
        double n = std::sqrt(n2);
        norms[r] = n;
        double c = n > 0.0 ? n / (1.0 + n2) : 0.0;
        for (std::size_t i = 0; i < d; ++i) out_v[r * d + i] = c * s[i];
    }
    bool rec = detail::tracked(g, {&a});
    Tensor out(a.shape(), std::move(out_v), rec);
    if (rec) {
        Tensor ac = a, oc = out;
        g->record("squash", [ac, oc, norms, rows, d]() mutable {
            const auto& go = oc.grad();
            const auto& av2 = ac.value();
            auto& ga = ac.grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double n = norms[r];
                if (n == 0.0) continue;  // Jacobian vanishes in the limit
                double n2 = n * n;
                double c = n / (1.0 + n2);
                double q = (1.0 - n2) / ((1.0 + n2) * (1.0 + n2) * n);
                const double* s = av2.data() + r * d;
                const double* gv = go.data() + r * d;
                double sdotg = 0.0;
                for (std::size_t i = 0; i < d; ++i) sdotg += s[i] * gv[i];
                for (std::size_t i = 0; i < d; ++i) ga[r * d + i] += c * gv[i] + q * sdotg * s[i];
            }
        });
    }
    return out;
}

/// Per-pair affine capsule prediction:
///   u_hat[b,i,j,:] = W[i,j] . u[b,i,:]
/// W: [I,J,O,D], u: [B,I,D] -> [B,I,J,O].
inline Tensor caps_transform(Graph* g, const Tensor& w, const Tensor& u) {
    if (w.rank() != 4) throw shape_error("capsule weight must be rank 4, got " + shape_str(w.shape()));
    if (u.rank() != 3) throw shape_error("capsule input must be [batch, caps, dim], got " + shape_str(u.shape()));
    std::size_t I = w.dim(0), J = w.dim(1), O = w.dim(2), D = w.dim(3);
    std::size_t B = u.dim(0);
    if (u.dim(1) != I || u.dim(2) != D)
        throw shape_error("capsule input " + shape_str(u.shape()) + " does not match weight " +
                          shape_str(w.shape()));
    std::vector<double> out_v(B * I * J * O, 0.0);
    {
        const auto& wv = w.value();
        const auto& uv = u.value();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < I; ++i) {
                const double* ui = uv.data() + (b * I + i) * D;
                for (std::size_t j = 0; j < J; ++j) {
                    const double* wij = wv.data() + ((i * J + j) * O) * D;
                    double* o = out_v.data() + ((b * I + i) * J + j) * O;
                    for (std::size_t oo = 0; oo < O; ++oo) {
                        double s = 0.0;
                        const double* wrow = wij + oo * D;
                        for (std::size_t dd = 0; dd < D; ++dd) s += wrow[dd] * ui[dd];
                        o[oo] = s;
                    }
                }
            }
    }
    bool rec = detail::tracked(g, {&w, &u});
    Tensor out(Shape{B, I, J, O}, std::move(out_v), rec);
    if (rec) {
        Tensor wc = w, uc = u, oc = out;
        g->record("caps_transform", [wc, uc, oc, B, I, J, O, D]() mutable {
            const auto& go = oc.grad();
            const auto& wv = wc.value();
            const auto& uv = uc.value();
            auto& gw = wc.grad();
            auto& gu = uc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < I; ++i) {
                    const double* ui = uv.data() + (b * I + i) * D;
                    double* gui = gu.data() + (b * I + i) * D;
                    for (std::size_t j = 0; j < J; ++j) {
                        const double* g_out = go.data() + ((b * I + i) * J + j) * O;
                        const double* wij = wv.data() + ((i * J + j) * O) * D;
                        double* gwij = gw.data() + ((i * J + j) * O) * D;
                        for (std::size_t oo = 0; oo < O; ++oo) {
                            double gval = g_out[oo];
                            if (gval == 0.0) continue;
                            const double* wrow = wij + oo * D;
                            double* gwrow = gwij + oo * D;
                            for (std::size_t dd = 0; dd < D; ++dd) {
                                gwrow[dd] += gval * ui[dd];
                                gui[dd] += gval * wrow[dd];
                            }
                        }
                    }
                }
        });
    }
    return out;
}

/// Coupled sum over input capsules: s[b,j,:] = sum_i c[b,i,j] * u_hat[b,i,j,:].
inline Tensor caps_weighted_sum(Graph* g, const Tensor& c, const Tensor& u_hat) {
    if (c.rank() != 3 || u_hat.rank() != 4)
        throw shape_error("caps_weighted_sum expects c [B,I,J] and u_hat [B,I,J,O]");
    std::size_t B = u_hat.dim(0), I = u_hat.dim(1), J = u_hat.dim(2), O = u_hat.dim(3);
    if (c.dim(0) != B || c.dim(1) != I || c.dim(2) != J)
        throw shape_error("coupling shape " + shape_str(c.shape()) + " does not match " +
                          shape_str(u_hat.shape()));
    std::vector<double> out_v(B * J * O, 0.0);
    {
        const auto& cv = c.value();
        const auto& uv = u_hat.value();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < I; ++i)
                for (std::size_t j = 0; j < J; ++j) {
                    double cc = cv[(b * I + i) * J + j];
                    const double* uh = uv.data() + ((b * I + i) * J + j) * O;
                    double* o = out_v.data() + (b * J + j) * O;
                    for (std::size_t oo = 0; oo < O; ++oo) o[oo] += cc * uh[oo];
                }
    }
    bool rec = detail::tracked(g, {&c, &u_hat});
    Tensor out(Shape{B, J, O}, std::move(out_v), rec);
    if (rec) {
        Tensor cc2 = c, uc = u_hat, oc = out;
        g->record("caps_weighted_sum", [cc2, uc, oc, B, I, J, O]() mutable {
            const auto& go = oc.grad();
            const auto& cv = cc2.value();
            const auto& uv = uc.value();
            auto& gc = cc2.grad();
            auto& gu = uc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < I; ++i)
                    for (std::size_t j = 0; j < J; ++j) {
                        const double* gs = go.data() + (b * J + j) * O;
                        const double* uh = uv.data() + ((b * I + i) * J + j) * O;
                        double* guh = gu.data() + ((b * I + i) * J + j) * O;
                        double cval = cv[(b * I + i) * J + j];
                        double acc = 0.0;
                        for (std::size_t oo = 0; oo < O; ++oo) {
                            acc += uh[oo] * gs[oo];
                            guh[oo] += cval * gs[oo];
                        }
                        gc[(b * I + i) * J + j] += acc;
                    }
        });
    }
    return out;
}

/// Routing agreement logits: a[b,i,j] = u_hat[b,i,j,:] . v[b,j,:].
inline Tensor caps_agreement(Graph* g, const Tensor& u_hat, const Tensor& v) {
    if (u_hat.rank() != 4 || v.rank() != 3)
        throw shape_error("caps_agreement expects u_hat [B,I,J,O] and v [B,J,O]");
    std::size_t B = u_hat.dim(0), I = u_hat.dim(1), J = u_hat.dim(2), O = u_hat.dim(3);
    if (v.dim(0) != B || v.dim(1) != J || v.dim(2) != O)
        throw shape_error("agreement shapes disagree");
    std::vector<double> out_v(B * I * J, 0.0);
    {
        const auto& uv = u_hat.value();
        const auto& vv = v.value();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < I; ++i)
                for (std::size_t j = 0; j < J; ++j) {
                    const double* uh = uv.data() + ((b * I + i) * J + j) * O;
                    const double* vj = vv.data() + (b * J + j) * O;
                    double s = 0.0;
                    for (std::size_t oo = 0; oo < O; ++oo) s += uh[oo] * vj[oo];
                    out_v[(b * I + i) * J + j] = s;
                }
    }
    bool rec = detail::tracked(g, {&u_hat, &v});
    Tensor out(Shape{B, I, J}, std::move(out_v), rec);
    if (rec) {
        Tensor uc = u_hat, vc = v, oc = out;
        g->record("caps_agreement", [uc, vc, oc, B, I, J, O]() mutable {
            const auto& go = oc.grad();
            const auto& uv = uc.value();
            const auto& vv = vc.value();
            auto& gu = uc.grad();
            auto& gv = vc.grad();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t i = 0; i < I; ++i)
                    for (std::size_t j = 0; j < J; ++j) {
                        double ga = go[(b * I + i) * J + j];
                        if (ga == 0.0) continue;
                        const double* uh = uv.data() + ((b * I + i) * J + j) * O;
                        const double* vj = vv.data() + (b * J + j) * O;
                        double* guh = gu.data() + ((b * I + i) * J + j) * O;
                        double* gvj = gv.data() + (b * J + j) * O;
                        for (std::size_t oo = 0; oo < O; ++oo) {
                            guh[oo] += ga * vj[oo];
                            gvj[oo] += ga * uh[oo];
                        }
                    }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout: each element zeroed with probability `rate` during
/// training, survivors scaled by 1/(1-rate); identity at inference.
inline Tensor dropout(Graph* g, const Tensor& x, double rate, bool training,
                      std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw contract_error("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    double keep_scale = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = unit(rng) < rate ? 0.0 : keep_scale;
    std::vector<double> out_v(x.size());
    const auto& xv = x.value();
    for (std::size_t i = 0; i < out_v.size(); ++i) out_v[i] = xv[i] * mask[i];
    bool rec = detail::tracked(g, {&x});
    Tensor out(x.shape(), std::move(out_v), rec);
    if (rec) {
        Tensor xc = x, oc = out;
        g->record("dropout", [xc, oc, mask]() mutable {
            const auto& go = oc.grad();
            auto& gx = xc.grad();
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Composites
// ---------------------------------------------------------------------------

inline Tensor mse(Graph* g, const Tensor& prediction, const Tensor& target) {
    if (prediction.shape() != target.shape())
        throw shape_error("mse shapes disagree: " + shape_str(prediction.shape()) + " vs " +
                          shape_str(target.shape()));
    Tensor d = sub(g, prediction, target);
    return reduce(g, Reduce::mean, mul(g, d, d));
}

}  // namespace lstmcaps
