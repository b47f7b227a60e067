#pragma once

// Seeded synthetic multivariate series: per-feature sums of 2-3 sinusoids
// plus Gaussian noise, with level-shift or spike-burst anomalies injected
// after a clean head so a prefix is always available for training. Returns
// ground-truth point labels and a changepoint marker at each anomaly onset.

#include <random>

#include "lstmcaps/common.hpp"

namespace lstmcaps {

struct AnomalySpec {
    std::size_t count = 2;
    double magnitude = 2.0;  // offset added to the raw signal
    std::size_t width = 80;  // affected points per anomaly
};

struct SyntheticConfig {
    std::size_t n_features = 3;
    std::size_t length = 1200;
    AnomalySpec anomaly;
    double clean_fraction = 0.5;  // anomalies only after this prefix
    double noise_level = 0.05;    // noise sigma as a fraction of signal amplitude
    std::uint64_t seed = 1;
};

struct SyntheticSeries {
    Matrix series;
    std::vector<std::uint8_t> anomaly;
    std::vector<std::uint8_t> changepoint;
};

inline SyntheticSeries generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.n_features < 1 || cfg.length < 4) throw contract_error("synthetic series too small");
    if (cfg.clean_fraction < 0.0 || cfg.clean_fraction >= 1.0)
        throw contract_error("clean_fraction must be in [0, 1)");
    auto head = static_cast<std::size_t>(cfg.clean_fraction * static_cast<double>(cfg.length));
    std::size_t tail = cfg.length - head;
    if (cfg.anomaly.count > 0) {
        if (cfg.anomaly.width == 0) throw contract_error("anomaly width must be >= 1");
        if (cfg.anomaly.count * cfg.anomaly.width > tail)
            throw contract_error("anomalies do not fit: " + std::to_string(cfg.anomaly.count) +
                                 " x " + std::to_string(cfg.anomaly.width) + " > " +
                                 std::to_string(tail) + " available rows");
    }

    std::mt19937_64 rng(mix_seed(cfg.seed, 10));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SyntheticSeries out;
    out.series = Matrix(cfg.length, cfg.n_features);
    out.anomaly.assign(cfg.length, 0);
    out.changepoint.assign(cfg.length, 0);

    for (std::size_t f = 0; f < cfg.n_features; ++f) {
        std::size_t n_waves = 2 + (rng() % 2);
        std::vector<double> amp(n_waves), freq(n_waves), phase(n_waves);
        double total_amp = 0.0;
        for (std::size_t k = 0; k < n_waves; ++k) {
            amp[k] = 0.4 + 0.6 * unit(rng);
            freq[k] = 0.005 + 0.045 * unit(rng);
            phase[k] = 2.0 * 3.14159265358979323846 * unit(rng);
            total_amp += amp[k];
        }
        double noise_sigma = cfg.noise_level * total_amp;
        for (std::size_t t = 0; t < cfg.length; ++t) {
            double v = 0.0;
            for (std::size_t k = 0; k < n_waves; ++k)
                v += amp[k] * std::sin(2.0 * 3.14159265358979323846 * freq[k] *
                                           static_cast<double>(t) +
                                       phase[k]);
            out.series.at(t, f) = v + noise_sigma * gauss(rng);
        }
    }

    // Disjoint anomaly placement: one anomaly per equal block of the tail,
    // jittered within its block.
    for (std::size_t a = 0; a < cfg.anomaly.count; ++a) {
        std::size_t block = tail / cfg.anomaly.count;
        if (block < cfg.anomaly.width)
            throw contract_error("anomalies overlap: widen the tail or shrink count/width");
        std::size_t slack = block - cfg.anomaly.width;
        std::size_t start = head + a * block +
                            (slack ? static_cast<std::size_t>(rng() % (slack + 1)) : 0);

        bool level_shift = a % 2 == 0;
        double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
        std::vector<std::size_t> affected;
        for (std::size_t f = 0; f < cfg.n_features; ++f)
            if (unit(rng) < 0.5) affected.push_back(f);
        if (affected.empty()) affected.push_back(rng() % cfg.n_features);

        out.changepoint[start] = 1;
        for (std::size_t k = 0; k < cfg.anomaly.width; ++k) {
            std::size_t t = start + k;
            out.anomaly[t] = 1;
            double delta = level_shift ? sign * cfg.anomaly.magnitude
                                       : (k % 2 == 0 ? 1.0 : -1.0) * sign * cfg.anomaly.magnitude;
            for (std::size_t f : affected) out.series.at(t, f) += delta;
        }
    }
    return out;
}

}  // namespace lstmcaps
