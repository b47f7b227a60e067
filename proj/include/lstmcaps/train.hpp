#pragma once

// Reconstruction training: Adam on MSE with a chronological train/validation
// split, optional early stopping, and best-weight restoration.

#include <fstream>
#include <limits>
#include <numeric>

#include "lstmcaps/data.hpp"
#include "lstmcaps/model.hpp"

namespace lstmcaps {

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    bool early_stopping = true;
    std::size_t early_stop_patience = 20;
    double val_fraction = 0.2;
    std::uint64_t seed = 1;
    bool verbose = false;

    void validate() const {
        if (epochs < 1) throw config_error("epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw config_error("learning_rate must be > 0");
        if (batch_size < 1) throw config_error("batch_size must be >= 1");
        if (val_fraction <= 0.0 || val_fraction >= 1.0)
            throw config_error("val_fraction must be in (0, 1)");
        if (early_stop_patience > epochs)
            throw config_error("early_stop_patience must be <= epochs");
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::size_t t = 0;

    static AdamState init(const std::vector<std::pair<std::string, Tensor>>& params) {
        AdamState s;
        for (const auto& [name, p] : params) {
            s.m.emplace_back(p.size(), 0.0);
            s.v.emplace_back(p.size(), 0.0);
        }
        return s;
    }
};

/// One bias-corrected Adam update over all parameters. Parameters without an
/// allocated gradient are treated as zero-gradient.
inline void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw contract_error("adam state does not match parameter list");
    state.t += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].second;
        if (state.m[i].size() != p.size())
            throw contract_error("adam state shape mismatch at " + params[i].first);
        auto& value = p.value();
        const auto& grad = p.grad_view();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < value.size(); ++k) {
            double gk = grad.empty() ? 0.0 : grad[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            double m_hat = m[k] / bc1;
            double v_hat = v[k] / bc2;
            value[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainReport {
    std::vector<double> train_curve;  // mean batch loss per epoch (training mode)
    std::vector<double> val_curve;    // validation loss per epoch (inference mode)
    std::size_t best_epoch = 0;       // 1-based epoch with lowest validation loss
    double best_val_loss = 0.0;
    double final_train_loss = 0.0;    // last executed epoch
    double final_val_loss = 0.0;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
};

namespace detail {

inline double batched_loss(Model& model, const WindowedDataset& data, std::size_t first,
                           std::size_t count, std::size_t batch_size) {
    double total = 0.0;
    for (std::size_t at = 0; at < count; at += batch_size) {
        std::size_t b = std::min(batch_size, count - at);
        Tensor x = data.gather_range(first + at, b);
        Graph g;
        Tensor out = model.forward(&g, x, false);
        Tensor loss = mse(&g, out, x);
        total += loss.value()[0] * static_cast<double>(b);
    }
    return total / static_cast<double>(count);
}

}  // namespace detail

/// Trains the model to reconstruct its input windows. The last val_fraction
/// of windows (chronologically) validate; whole windows are shuffled into
/// mini-batches with a seeded RNG. Early stopping fires once validation loss
/// has not improved for more than `patience` epochs; the best-validation
/// weights are restored before returning.
inline TrainReport train(Model& model, const WindowedDataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.n == 0) throw contract_error("cannot train on an empty dataset");
    std::size_t n_train = train_window_count(data.n, cfg.val_fraction);
    std::size_t n_val = data.n - n_train;

    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 2));
    model.reseed_dropout(mix_seed(cfg.seed, 3));

    auto params = model.parameters();
    AdamState adam = AdamState::init(params);

    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_weights = model.snapshot();
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t at = 0; at < n_train; at += cfg.batch_size) {
            std::size_t b = std::min(cfg.batch_size, n_train - at);
            std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + b);
            Tensor x = data.gather(idx);
            Graph g;
            Tensor out = model.forward(&g, x, true);
            Tensor loss = mse(&g, out, x);
            double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw training_error("training diverged: non-finite loss at epoch " +
                                     std::to_string(epoch));
            epoch_loss += lv * static_cast<double>(b);
            model.zero_grads();
            g.backward(loss);
            adam_step(params, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
        }
        epoch_loss /= static_cast<double>(n_train);

        double val_loss = detail::batched_loss(model, data, n_train, n_val, cfg.batch_size);
        if (!std::isfinite(val_loss))
            throw training_error("training diverged: non-finite validation loss at epoch " +
                                 std::to_string(epoch));
        report.train_curve.push_back(epoch_loss);
        report.val_curve.push_back(val_loss);
        report.epochs_run = epoch;

        if (val_loss < best_val) {
            best_val = val_loss;
            report.best_epoch = epoch;
            best_weights = model.snapshot();
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }
        if (cfg.verbose)
            std::fprintf(stderr, "epoch %zu train %.6g val %.6g\n", epoch, epoch_loss, val_loss);
        if (cfg.early_stopping && epochs_since_best > cfg.early_stop_patience) {
            report.stopped_early = true;
            break;
        }
    }

    model.restore(best_weights);
    report.best_val_loss = best_val;
    report.final_train_loss = report.train_curve.back();
    report.final_val_loss = report.val_curve.back();
    return report;
}

// ---------------------------------------------------------------------------
// Derived training metrics
// ---------------------------------------------------------------------------

/// 100 * (val - train) / train.
inline double overfit_percentage(double train_loss, double val_loss) {
    if (!(train_loss > 0.0)) throw contract_error("overfit_percentage needs train_loss > 0");
    return 100.0 * (val_loss - train_loss) / train_loss;
}

/// 100 * (nocaps - caps) / nocaps: relative validation-loss gain of the
/// capsule variant over its capsule-free counterpart.
inline double val_loss_improvement(double caps_val, double nocaps_val) {
    if (!(nocaps_val > 0.0)) throw contract_error("val_loss_improvement needs nocaps_val > 0");
    return 100.0 * (nocaps_val - caps_val) / nocaps_val;
}

// ---------------------------------------------------------------------------
// Report serialization (key-value lines plus loss-curve arrays)
// ---------------------------------------------------------------------------

inline void write_train_report(std::ostream& os, const TrainReport& r) {
    os << "epochs_run " << r.epochs_run << "\n";
    os << "best_epoch " << r.best_epoch << "\n";
    os << "best_val_loss " << format_double(r.best_val_loss) << "\n";
    os << "final_train_loss " << format_double(r.final_train_loss) << "\n";
    os << "final_val_loss " << format_double(r.final_val_loss) << "\n";
    os << "stopped_early " << (r.stopped_early ? 1 : 0) << "\n";
    os << "train_loss_curve";
    for (double v : r.train_curve) os << ' ' << format_double(v);
    os << "\nval_loss_curve";
    for (double v : r.val_curve) os << ' ' << format_double(v);
    os << "\n";
}

inline void write_train_report(const std::string& path, const TrainReport& r) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    write_train_report(os, r);
}

}  // namespace lstmcaps
