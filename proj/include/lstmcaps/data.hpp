#pragma once

// Series preparation: z-score normalisation and sliding windows.

#include <cmath>

#include "lstmcaps/tensor.hpp"

namespace lstmcaps {

struct NormalizerStats {
    std::vector<double> mu;
    std::vector<double> sigma;       // population standard deviation
    std::vector<bool> constant;      // sigma below 1e-12

    std::size_t features() const { return mu.size(); }
};

/// Per-feature mean and population standard deviation. Callers are expected
/// to pass only the training slice; validation/test rows must not reach this.
inline NormalizerStats fit_normalizer(const Matrix& series) {
    if (series.rows < 2) throw contract_error("fit_normalizer needs at least 2 rows");
    NormalizerStats s;
    std::size_t f = series.cols;
    s.mu.assign(f, 0.0);
    s.sigma.assign(f, 0.0);
    s.constant.assign(f, false);
    double n = static_cast<double>(series.rows);
    for (std::size_t r = 0; r < series.rows; ++r)
        for (std::size_t c = 0; c < f; ++c) s.mu[c] += series.at(r, c);
    for (std::size_t c = 0; c < f; ++c) s.mu[c] /= n;
    for (std::size_t r = 0; r < series.rows; ++r)
        for (std::size_t c = 0; c < f; ++c) {
            double d = series.at(r, c) - s.mu[c];
            s.sigma[c] += d * d;
        }
    for (std::size_t c = 0; c < f; ++c) {
        s.sigma[c] = std::sqrt(s.sigma[c] / n);
        if (s.sigma[c] < 1e-12) s.constant[c] = true;
    }
    return s;
}

/// z = (x - mu) / sigma; constant features map to 0.
inline Matrix apply_normalizer(const NormalizerStats& stats, const Matrix& series) {
    if (series.cols != stats.features())
        throw shape_error("normalizer fitted on " + std::to_string(stats.features()) +
                          " features, series has " + std::to_string(series.cols));
    Matrix out(series.rows, series.cols);
    for (std::size_t r = 0; r < series.rows; ++r)
        for (std::size_t c = 0; c < series.cols; ++c)
            out.at(r, c) = stats.constant[c]
                               ? 0.0
                               : (series.at(r, c) - stats.mu[c]) / stats.sigma[c];
    return out;
}

struct WindowedDataset {
    std::vector<double> windows;        // [N, T, F] row-major
    std::vector<std::size_t> start_indices;
    std::size_t n = 0, t = 0, f = 0;
    std::size_t stride = 1;

    std::size_t count() const { return n; }

    const double* window_data(std::size_t i) const { return windows.data() + i * t * f; }

    /// Assembles a [B,T,F] tensor from the given window indices.
    Tensor gather(const std::vector<std::size_t>& idx) const {
        std::vector<double> v(idx.size() * t * f);
        for (std::size_t b = 0; b < idx.size(); ++b)
            std::copy_n(window_data(idx[b]), t * f, v.data() + b * t * f);
        return Tensor({idx.size(), t, f}, std::move(v));
    }

    Tensor gather_range(std::size_t first, std::size_t count_) const {
        std::vector<std::size_t> idx(count_);
        for (std::size_t i = 0; i < count_; ++i) idx[i] = first + i;
        return gather(idx);
    }
};

/// N = floor((L - T) / stride) + 1 windows; window i covers original rows
/// [i*stride, i*stride + T).
inline WindowedDataset make_windows(const Matrix& series, std::size_t t, std::size_t stride) {
    if (t < 1) throw contract_error("window length must be >= 1");
    if (stride < 1) throw contract_error("stride must be >= 1");
    if (series.rows < t)
        throw contract_error("series of length " + std::to_string(series.rows) +
                             " is shorter than window " + std::to_string(t));
    WindowedDataset ds;
    ds.t = t;
    ds.f = series.cols;
    ds.stride = stride;
    ds.n = (series.rows - t) / stride + 1;
    ds.windows.resize(ds.n * t * series.cols);
    ds.start_indices.resize(ds.n);
    for (std::size_t i = 0; i < ds.n; ++i) {
        std::size_t start = i * stride;
        ds.start_indices[i] = start;
        std::copy_n(series.v.data() + start * series.cols, t * series.cols,
                    ds.windows.data() + i * t * series.cols);
    }
    return ds;
}

/// Chronological split point: the last `val_fraction` of windows validate.
inline std::size_t train_window_count(std::size_t n_windows, double val_fraction) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw contract_error("val_fraction must be in (0, 1)");
    auto n_val = static_cast<std::size_t>(static_cast<double>(n_windows) * val_fraction);
    if (n_val == 0) n_val = 1;
    if (n_val >= n_windows)
        throw contract_error("empty training split: " + std::to_string(n_windows) + " windows");
    return n_windows - n_val;
}

struct PreparedData {
    WindowedDataset windows;  // normalized, built over the full healthy series
    NormalizerStats stats;    // fitted on the training slice only
    std::size_t n_train_windows = 0;
};

/// Normalisation stats come from the rows covered by training windows only,
/// so later validation rows can never leak into mu/sigma.
inline PreparedData prepare_training_data(const Matrix& series, std::size_t t,
                                          std::size_t stride, double val_fraction) {
    WindowedDataset raw = make_windows(series, t, stride);
    std::size_t n_train = train_window_count(raw.n, val_fraction);
    std::size_t train_rows = raw.start_indices[n_train - 1] + t;

    Matrix train_slice(train_rows, series.cols);
    std::copy_n(series.v.data(), train_rows * series.cols, train_slice.v.data());

    PreparedData out;
    out.stats = fit_normalizer(train_slice);
    out.windows = make_windows(apply_normalizer(out.stats, series), t, stride);
    out.n_train_windows = n_train;
    return out;
}

}  // namespace lstmcaps
