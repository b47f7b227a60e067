#pragma once

// Layer primitives: LSTM cell/sequence, capsule layer, repeat vector,
// time-distributed dense, feature concatenation. All forwards are batch-first
// ([B, ...]) and record onto the caller's Graph.

#include <random>

#include "lstmcaps/tensor.hpp"

namespace lstmcaps {

// ---------------------------------------------------------------------------
// Initialisers
// ---------------------------------------------------------------------------

/// Uniform(-L, L) with L = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                             std::mt19937_64& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

inline Tensor uniform_init(Shape shape, double limit, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), true);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// Gate weights operate on the concatenated [h_{t-1}, x_t] vector, so each
/// W has shape [hidden, hidden+input].
struct LstmParams {
    Tensor w_f, w_i, w_c, w_o;  // [H, H+I]
    Tensor b_f, b_i, b_c, b_o;  // [H]

    std::size_t hidden() const { return w_f.dim(0); }
    std::size_t input_width() const { return w_f.dim(1) - w_f.dim(0); }

    static LstmParams init(std::size_t input, std::size_t hidden, std::mt19937_64& rng) {
        if (input == 0 || hidden == 0) throw contract_error("lstm widths must be >= 1");
        LstmParams p;
        std::size_t cat = hidden + input;
        p.w_f = glorot_uniform({hidden, cat}, cat, hidden, rng);
        p.w_i = glorot_uniform({hidden, cat}, cat, hidden, rng);
        p.w_c = glorot_uniform({hidden, cat}, cat, hidden, rng);
        p.w_o = glorot_uniform({hidden, cat}, cat, hidden, rng);
        p.b_f = Tensor::zeros({hidden}, true);
        p.b_i = Tensor::zeros({hidden}, true);
        p.b_c = Tensor::zeros({hidden}, true);
        p.b_o = Tensor::zeros({hidden}, true);
        return p;
    }

    void check() const {
        const Shape& ws = w_f.shape();
        if (w_i.shape() != ws || w_c.shape() != ws || w_o.shape() != ws)
            throw shape_error("lstm gate weights must share one shape");
        const Shape& bs = b_f.shape();
        if (b_i.shape() != bs || b_c.shape() != bs || b_o.shape() != bs ||
            bs[0] != ws[0])
            throw shape_error("lstm gate biases must share length = hidden");
    }
};

struct LstmState {
    Tensor h;  // [B, H]
    Tensor c;  // [B, H]
};

inline LstmState lstm_zero_state(std::size_t batch, std::size_t hidden) {
    return {Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
}

/// One cell update:
///   f = sig(W_f.[h,x] + b_f)        i = sig(W_i.[h,x] + b_i)
///   c~ = tanh(W_c.[h,x] + b_c)      c' = f*c + i*c~
///   o = sig(W_o.[h,x] + b_o)        h' = o * tanh(c')
inline LstmState lstm_step(Graph* g, const LstmParams& p, const LstmState& state,
                           const Tensor& x) {
    if (x.rank() != 2) throw shape_error("lstm input must be [batch, features]");
    if (x.dim(1) != p.input_width())
        throw shape_error("lstm input width " + std::to_string(x.dim(1)) + " != expected " +
                          std::to_string(p.input_width()));
    if (state.h.dim(1) != p.hidden() || state.c.dim(1) != p.hidden() ||
        state.h.dim(0) != x.dim(0) || state.c.dim(0) != x.dim(0))
        throw shape_error("lstm state dims do not match params/batch");

    Tensor hx = concat(g, {state.h, x}, 1);  // [B, H+I]
    auto gate = [&](const Tensor& w, const Tensor& b) {
        return add(g, matmul(g, hx, transpose(g, w)), b);
    };
    Tensor f = sigmoid(g, gate(p.w_f, p.b_f));
    Tensor i = sigmoid(g, gate(p.w_i, p.b_i));
    Tensor c_cand = tanh(g, gate(p.w_c, p.b_c));
    Tensor c_new = add(g, mul(g, f, state.c), mul(g, i, c_cand));
    Tensor o = sigmoid(g, gate(p.w_o, p.b_o));
    Tensor h_new = mul(g, o, tanh(g, c_new));
    return {h_new, c_new};
}

/// Unrolls lstm_step over [B,T,I] from a zero state. Returns the full hidden
/// sequence [B,T,H] when return_sequences, otherwise the last hidden [B,H].
inline Tensor lstm_sequence(Graph* g, const LstmParams& p, const Tensor& xs,
                            bool return_sequences) {
    if (xs.rank() != 3) throw shape_error("lstm sequence input must be [batch, time, features]");
    std::size_t batch = xs.dim(0), steps = xs.dim(1);
    if (steps == 0) throw contract_error("lstm sequence needs at least one timestep");
    LstmState state = lstm_zero_state(batch, p.hidden());
    std::vector<Tensor> outputs;
    if (return_sequences) outputs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor x_t = reshape(g, slice(g, xs, 1, t, 1), {batch, xs.dim(2)});
        state = lstm_step(g, p, state, x_t);
        if (return_sequences)
            outputs.push_back(reshape(g, state.h, {batch, std::size_t{1}, p.hidden()}));
    }
    if (return_sequences) return concat(g, outputs, 1);
    return state.h;
}

// ---------------------------------------------------------------------------
// Capsule layer
// ---------------------------------------------------------------------------

enum class RoutingMode { uniform, dynamic };

struct CapsuleParams {
    Tensor w;  // [num_in, num_out, out_dim, in_dim]
    RoutingMode mode = RoutingMode::uniform;
    std::size_t routing_iters = 3;  // agreement updates before the output pass

    std::size_t num_in() const { return w.dim(0); }
    std::size_t num_out() const { return w.dim(1); }
    std::size_t out_dim() const { return w.dim(2); }
    std::size_t in_dim() const { return w.dim(3); }

    static CapsuleParams init(std::size_t num_in, std::size_t num_out, std::size_t out_dim,
                              std::size_t in_dim, RoutingMode mode, std::size_t iters,
                              std::mt19937_64& rng) {
        if (out_dim == 0 || in_dim == 0) throw contract_error("capsule dims must be >= 1");
        CapsuleParams p;
        p.w = uniform_init({num_in, num_out, out_dim, in_dim}, 0.1, rng);
        p.mode = mode;
        p.routing_iters = iters;
        return p;
    }
};

/// Coupling in uniform mode is the constant 1/num_in (no routing); dynamic
/// mode runs the softmax/agreement loop with logits initialised to zero, so
/// zero iterations reduce to the constant 1/num_out.
inline Tensor capsule_forward(Graph* g, const CapsuleParams& p, const Tensor& u) {
    Tensor u_hat = caps_transform(g, p.w, u);  // [B,I,J,O]
    std::size_t batch = u.dim(0);
    if (p.mode == RoutingMode::uniform) {
        Tensor s = reduce(g, Reduce::mean, u_hat, 1);  // c = 1/I
        return squash(g, s);
    }
    Tensor logits = Tensor::zeros({batch, p.num_in(), p.num_out()});
    Tensor v;
    for (std::size_t it = 0; it <= p.routing_iters; ++it) {
        Tensor coupling = softmax_last(g, logits);
        Tensor s = caps_weighted_sum(g, coupling, u_hat);
        v = squash(g, s);
        if (it < p.routing_iters) logits = add(g, logits, caps_agreement(g, u_hat, v));
    }
    return v;
}

// ---------------------------------------------------------------------------
// Plumbing layers
// ---------------------------------------------------------------------------

inline Tensor repeat_vector(Graph* g, const Tensor& v, std::size_t n) {
    return repeat_rows(g, v, n);
}

struct DenseParams {
    Tensor w;  // [out, in]
    Tensor b;  // [out]

    std::size_t in_width() const { return w.dim(1); }
    std::size_t out_width() const { return w.dim(0); }

    static DenseParams init(std::size_t in, std::size_t out, std::mt19937_64& rng) {
        DenseParams p;
        p.w = glorot_uniform({out, in}, in, out, rng);
        p.b = Tensor::zeros({out}, true);
        return p;
    }
};

/// Applies the same dense map to every timestep: [B,T,in] -> [B,T,out].
/// Linear output, no activation.
inline Tensor time_distributed_dense(Graph* g, const DenseParams& p, const Tensor& xs) {
    if (xs.rank() != 3) throw shape_error("time_distributed_dense input must be [B,T,in]");
    std::size_t batch = xs.dim(0), steps = xs.dim(1), in = xs.dim(2);
    if (in != p.in_width())
        throw shape_error("dense input width " + std::to_string(in) + " != expected " +
                          std::to_string(p.in_width()));
    Tensor flat = reshape(g, xs, {batch * steps, in});
    Tensor out = add(g, matmul(g, flat, transpose(g, p.w)), p.b);
    return reshape(g, out, {batch, steps, p.out_width()});
}

/// Concatenates per-branch sequences along the feature axis.
inline Tensor concat_features(Graph* g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw contract_error("concat_features of zero branches");
    for (const Tensor& p : parts)
        if (p.rank() != 3) throw shape_error("concat_features parts must be [B,T,d]");
    return concat(g, parts, 2);
}

}  // namespace lstmcaps
