#pragma once

// The four autoencoder designs:
//   A  branched input, capsule mixing stages (the hybrid)
//   B  branched input, LSTM mixing stages
//   C  single input, one capsule stage
//   D  single input, LSTM encoder/decoder
//
// A and B feed every feature through its own encoder branch and merge the
// branches before decoding; C and D carry all features through one branch.
// All designs reconstruct their input: forward([B,T,F]) -> [B,T,F].

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lstmcaps/layers.hpp"

namespace lstmcaps {

enum class Design { A, B, C, D };

inline char design_letter(Design d) {
    switch (d) {
        case Design::A: return 'A';
        case Design::B: return 'B';
        case Design::C: return 'C';
        case Design::D: return 'D';
    }
    return '?';
}

inline Design design_from_letter(char c) {
    switch (c) {
        case 'A': case 'a': return Design::A;
        case 'B': case 'b': return Design::B;
        case 'C': case 'c': return Design::C;
        case 'D': case 'd': return Design::D;
    }
    throw config_error(std::string("unknown design '") + c + "', expected A, B, C or D");
}

struct ModelSpec {
    Design design = Design::A;
    std::size_t n_features = 1;
    std::size_t timesteps = 64;
    std::size_t branch_width = 32;   // encoder LSTM hidden width
    std::size_t capsule_dim = 0;     // capsule output width; 0 -> branch_width
    std::size_t mixer_width = 0;     // B: branch LSTM width, D: decoder width; 0 -> default
    std::size_t merge_width = 0;     // B: merged LSTM width; 0 -> default
    std::size_t encoder_layers = 1;
    RoutingMode routing_mode = RoutingMode::uniform;
    std::size_t routing_iters = 3;
    double dropout_rate = 0.2;
    std::uint64_t seed = 1;

    bool branched() const { return design == Design::A || design == Design::B; }
    bool has_capsules() const { return design == Design::A || design == Design::C; }

    std::size_t caps_dim() const { return capsule_dim ? capsule_dim : branch_width; }
    /// Width of the LSTM standing in for a capsule stage (B) or decoding (D).
    std::size_t mixer() const { return mixer_width ? mixer_width : (design == Design::D ? branch_width : caps_dim()); }
    /// Merged stage width. Capsule merge is fixed by the architecture to
    /// caps_dim * n_features; the LSTM merge of design B defaults to match.
    std::size_t merge() const { return merge_width ? merge_width : caps_dim() * n_features; }
    /// Per-branch input width: one feature per branch when branched.
    std::size_t branch_input() const { return branched() ? 1 : n_features; }

    void validate() const {
        if (n_features < 1) throw config_error("n_features must be >= 1");
        if (timesteps < 2) throw config_error("timesteps must be >= 2");
        if (branch_width < 1) throw config_error("branch_width must be >= 1");
        if (encoder_layers < 1) throw config_error("encoder_layers must be >= 1");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0)
            throw config_error("dropout_rate must be in [0, 1)");
    }
};

// ---------------------------------------------------------------------------
// Analytic parameter counts
// ---------------------------------------------------------------------------

inline std::size_t lstm_param_count(std::size_t in, std::size_t hidden) {
    return 4 * (hidden * (hidden + in) + hidden);
}

inline std::size_t capsule_param_count(std::size_t num_in, std::size_t num_out,
                                       std::size_t out_dim, std::size_t in_dim) {
    return num_in * num_out * out_dim * in_dim;
}

inline std::size_t dense_param_count(std::size_t in, std::size_t out) { return out * (in + 1); }

inline std::size_t count_parameters(const ModelSpec& s) {
    s.validate();
    std::size_t f = s.n_features, t = s.timesteps, h = s.branch_width;
    std::size_t d = s.caps_dim(), w = s.mixer(), m = s.merge();
    std::size_t branches = s.branched() ? f : 1;

    std::size_t encoder = lstm_param_count(s.branch_input(), h);
    for (std::size_t l = 1; l < s.encoder_layers; ++l) encoder += lstm_param_count(h, h);
    std::size_t total = branches * encoder;

    switch (s.design) {
        case Design::A:
            total += f * capsule_param_count(t, t, d, h);
            total += capsule_param_count(t, t, d * f, d * f);
            total += dense_param_count(d * f, f);
            break;
        case Design::B:
            total += f * lstm_param_count(h, w);
            total += lstm_param_count(w * f, m);
            total += dense_param_count(m, f);
            break;
        case Design::C:
            total += capsule_param_count(t, t, d, h);
            total += dense_param_count(d, f);
            break;
        case Design::D:
            total += lstm_param_count(h, w);
            total += dense_param_count(w, f);
            break;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class Model {
public:
    static Model build(const ModelSpec& spec) {
        spec.validate();
        Model model;
        model.spec_ = spec;
        std::mt19937_64 rng(mix_seed(spec.seed, 0));
        model.dropout_rng_.seed(mix_seed(spec.seed, 1));

        std::size_t f = spec.n_features, t = spec.timesteps, h = spec.branch_width;
        std::size_t d = spec.caps_dim(), w = spec.mixer(), m = spec.merge();
        std::size_t branches = spec.branched() ? f : 1;

        for (std::size_t br = 0; br < branches; ++br) {
            std::vector<LstmParams> stack;
            stack.push_back(LstmParams::init(spec.branch_input(), h, rng));
            for (std::size_t l = 1; l < spec.encoder_layers; ++l)
                stack.push_back(LstmParams::init(h, h, rng));
            model.encoders_.push_back(std::move(stack));
            if (spec.has_capsules())
                model.branch_caps_.push_back(CapsuleParams::init(
                    t, t, d, h, spec.routing_mode, spec.routing_iters, rng));
            else
                model.branch_mixers_.push_back(LstmParams::init(h, w, rng));
        }
        if (spec.design == Design::A)
            model.merge_caps_ = CapsuleParams::init(t, t, d * f, d * f, spec.routing_mode,
                                                    spec.routing_iters, rng);
        else if (spec.design == Design::B)
            model.merge_mixer_ = LstmParams::init(w * f, m, rng);

        std::size_t dense_in = spec.design == Design::A   ? d * f
                               : spec.design == Design::B ? m
                               : spec.design == Design::C ? d
                                                          : w;
        model.out_dense_ = DenseParams::init(dense_in, f, rng);
        return model;
    }

    const ModelSpec& spec() const { return spec_; }
    std::size_t n_branches() const { return encoders_.size(); }

    Tensor forward(Graph* g, const Tensor& batch, bool training) {
        if (batch.rank() != 3)
            throw shape_error("model input must be [batch, timesteps, features]");
        if (batch.dim(1) != spec_.timesteps || batch.dim(2) != spec_.n_features)
            throw shape_error("model input " + shape_str(batch.shape()) +
                              " does not match spec [*, " + std::to_string(spec_.timesteps) +
                              ", " + std::to_string(spec_.n_features) + "]");

        std::size_t t = spec_.timesteps;
        std::vector<Tensor> branch_outputs;
        for (std::size_t br = 0; br < encoders_.size(); ++br) {
            Tensor xin = spec_.branched()
                             ? slice(g, batch, 2, br, 1)
                             : batch;
            Tensor latent = encode(g, encoders_[br], xin, training);
            Tensor repeated = repeat_vector(g, latent, t);
            Tensor mixed;
            if (spec_.has_capsules()) {
                mixed = capsule_forward(g, branch_caps_[br], repeated);
            } else {
                mixed = lstm_sequence(g, branch_mixers_[br], repeated, true);
                mixed = drop(g, mixed, training);
            }
            branch_outputs.push_back(mixed);
        }

        Tensor merged = branch_outputs.size() == 1 ? branch_outputs[0]
                                                   : concat_features(g, branch_outputs);
        if (merge_caps_)
            merged = capsule_forward(g, *merge_caps_, merged);
        else if (merge_mixer_) {
            merged = lstm_sequence(g, *merge_mixer_, merged, true);
            merged = drop(g, merged, training);
        }
        return time_distributed_dense(g, out_dense_, merged);
    }

    /// Stable-ordered named parameter list (checkpoint and optimiser order).
    std::vector<std::pair<std::string, Tensor>> parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        auto add_lstm = [&](const std::string& prefix, const LstmParams& p) {
            out.emplace_back(prefix + ".w_f", p.w_f);
            out.emplace_back(prefix + ".w_i", p.w_i);
            out.emplace_back(prefix + ".w_c", p.w_c);
            out.emplace_back(prefix + ".w_o", p.w_o);
            out.emplace_back(prefix + ".b_f", p.b_f);
            out.emplace_back(prefix + ".b_i", p.b_i);
            out.emplace_back(prefix + ".b_c", p.b_c);
            out.emplace_back(prefix + ".b_o", p.b_o);
        };
        for (std::size_t br = 0; br < encoders_.size(); ++br) {
            std::string bp = "branch" + std::to_string(br);
            for (std::size_t l = 0; l < encoders_[br].size(); ++l)
                add_lstm(bp + ".enc" + std::to_string(l), encoders_[br][l]);
            if (spec_.has_capsules())
                out.emplace_back(bp + ".caps.w", branch_caps_[br].w);
            else
                add_lstm(bp + ".mixer", branch_mixers_[br]);
        }
        if (merge_caps_) out.emplace_back("merge.caps.w", merge_caps_->w);
        if (merge_mixer_) add_lstm("merge.mixer", *merge_mixer_);
        out.emplace_back("out.w", out_dense_.w);
        out.emplace_back("out.b", out_dense_.b);
        return out;
    }

    std::size_t parameter_element_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : parameters()) n += t.size();
        return n;
    }

    void zero_grads() {
        for (auto&& [name, t] : parameters()) t.zero_grad();
    }

    std::vector<std::vector<double>> snapshot() const {
        std::vector<std::vector<double>> s;
        for (const auto& [name, t] : parameters()) s.push_back(t.value());
        return s;
    }

    void restore(const std::vector<std::vector<double>>& s) {
        auto params = parameters();
        if (s.size() != params.size()) throw contract_error("snapshot/model mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i].size() != params[i].second.size())
                throw contract_error("snapshot tensor size mismatch at " + params[i].first);
            params[i].second.value() = s[i];
        }
    }

    void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

    /// Overwrites one named parameter's values (checkpoint loading).
    void set_parameter(const std::string& name, const std::vector<double>& v) {
        for (auto&& [n, t] : parameters())
            if (n == name) {
                if (t.size() != v.size())
                    throw contract_error("parameter " + name + " size mismatch");
                t.value() = v;
                return;
            }
        throw contract_error("unknown parameter " + name);
    }

private:
    Tensor encode(Graph* g, const std::vector<LstmParams>& stack, const Tensor& xin,
                  bool training) {
        Tensor x = xin;
        for (std::size_t l = 0; l + 1 < stack.size(); ++l) {
            x = lstm_sequence(g, stack[l], x, true);
            x = drop(g, x, training);
        }
        Tensor last = lstm_sequence(g, stack.back(), x, false);
        return drop(g, last, training);
    }

    Tensor drop(Graph* g, const Tensor& x, bool training) {
        return dropout(g, x, spec_.dropout_rate, training, dropout_rng_);
    }

    ModelSpec spec_;
    std::vector<std::vector<LstmParams>> encoders_;
    std::vector<CapsuleParams> branch_caps_;
    std::vector<LstmParams> branch_mixers_;
    std::optional<CapsuleParams> merge_caps_;
    std::optional<LstmParams> merge_mixer_;
    DenseParams out_dense_;
    std::mt19937_64 dropout_rng_;
};

// ---------------------------------------------------------------------------
// Parameter-matched design quartet
// ---------------------------------------------------------------------------

struct DesignQuartet {
    ModelSpec a, b, c, d;
};

/// Derives B/C/D specs whose analytic parameter counts sit as close as
/// possible to the reference design-A count, by integer search over the free
/// hidden widths. Used to compare architectures at equal capacity.
inline DesignQuartet match_parameter_counts(const ModelSpec& ref_a) {
    if (ref_a.design != Design::A)
        throw contract_error("match_parameter_counts expects a design-A reference");
    ref_a.validate();
    std::size_t target = count_parameters(ref_a);

    auto better = [&](std::size_t cand, std::size_t best) {
        auto dist = [&](std::size_t c) {
            return c > target ? c - target : target - c;
        };
        return dist(cand) < dist(best);
    };

    DesignQuartet q{ref_a, ref_a, ref_a, ref_a};

    // Design B: encoder width tied to the reference, branch mixer width = w,
    // merged mixer width = m.
    {
        ModelSpec best;
        std::size_t best_count = 0;
        bool have = false;
        for (std::size_t w = 1; w <= 96; ++w)
            for (std::size_t m = 1; m <= 256; ++m) {
                ModelSpec s = ref_a;
                s.design = Design::B;
                s.mixer_width = w;
                s.merge_width = m;
                std::size_t c = count_parameters(s);
                if (c > target * 2 && m > 8) break;  // counts grow monotonically in m
                if (!have || better(c, best_count)) {
                    best = s;
                    best_count = c;
                    have = true;
                }
            }
        q.b = best;
    }

    // Design C: encoder width h and capsule width d both free.
    {
        ModelSpec best;
        std::size_t best_count = 0;
        bool have = false;
        for (std::size_t h = 1; h <= 192; ++h)
            for (std::size_t d = 1; d <= 192; ++d) {
                ModelSpec s = ref_a;
                s.design = Design::C;
                s.branch_width = h;
                s.capsule_dim = d;
                std::size_t c = count_parameters(s);
                if (c > target * 2 && d > 4) break;
                if (!have || better(c, best_count)) {
                    best = s;
                    best_count = c;
                    have = true;
                }
            }
        q.c = best;
    }

    // Design D: encoder width h and decoder width w free.
    {
        ModelSpec best;
        std::size_t best_count = 0;
        bool have = false;
        for (std::size_t h = 1; h <= 192; ++h)
            for (std::size_t w = 1; w <= 192; ++w) {
                ModelSpec s = ref_a;
                s.design = Design::D;
                s.branch_width = h;
                s.mixer_width = w;
                std::size_t c = count_parameters(s);
                if (c > target * 2 && w > 4) break;
                if (!have || better(c, best_count)) {
                    best = s;
                    best_count = c;
                    have = true;
                }
            }
        q.d = best;
    }
    return q;
}

}  // namespace lstmcaps
