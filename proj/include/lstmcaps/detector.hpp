#pragma once

// Threshold calibration from training reconstruction errors, and point-level
// anomaly flagging: each feature's threshold is the worst (maximum) training
// window MAE for that feature, scaled by a sensitivity multiplier. A test
// window trips a feature when its MAE strictly exceeds the threshold, and a
// point is anomalous when any covering window trips in any feature.

#include <fstream>

#include "lstmcaps/data.hpp"
#include "lstmcaps/model.hpp"

namespace lstmcaps {

struct ThresholdProfile {
    std::vector<double> per_feature_threshold;  // sensitivity * max calibration MAE
    double sensitivity = 1.0;
    Matrix calibration_errors;  // [N, F] raw (unscaled) training-window MAEs

    std::size_t features() const { return per_feature_threshold.size(); }

    /// Thresholds are re-derivable from the retained calibration errors, so
    /// the sensitivity can be changed after calibration.
    void set_sensitivity(double s) {
        if (!(s > 0.0)) throw contract_error("sensitivity must be > 0");
        sensitivity = s;
        for (std::size_t f = 0; f < per_feature_threshold.size(); ++f) {
            double mx = 0.0;
            for (std::size_t w = 0; w < calibration_errors.rows; ++w)
                mx = std::max(mx, calibration_errors.at(w, f));
            per_feature_threshold[f] = s * mx;
        }
    }
};

/// Per-feature mean absolute reconstruction error of one window:
/// MAE_f = (1/T) sum_t |xhat[t,f] - x[t,f]|.
inline std::vector<double> window_mae(const Tensor& x, const Tensor& xhat) {
    if (x.shape() != xhat.shape())
        throw shape_error("window_mae shapes disagree: " + shape_str(x.shape()) + " vs " +
                          shape_str(xhat.shape()));
    if (x.rank() != 2) throw shape_error("window_mae expects [T, F] windows");
    std::size_t t = x.dim(0), f = x.dim(1);
    std::vector<double> mae(f, 0.0);
    const auto& xv = x.value();
    const auto& pv = xhat.value();
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t c = 0; c < f; ++c) mae[c] += std::abs(pv[r * f + c] - xv[r * f + c]);
    for (double& m : mae) m /= static_cast<double>(t);
    return mae;
}

namespace detail {

/// Reconstructs every window (inference mode) and tabulates per-window
/// per-feature MAEs.
inline Matrix reconstruction_errors(Model& model, const WindowedDataset& data,
                                    std::size_t batch_size = 64) {
    if (data.n == 0) throw contract_error("no windows to reconstruct");
    if (data.f != model.spec().n_features || data.t != model.spec().timesteps)
        throw contract_error("windows " + std::to_string(data.t) + "x" + std::to_string(data.f) +
                             " do not match model spec");
    Matrix errors(data.n, data.f);
    for (std::size_t at = 0; at < data.n; at += batch_size) {
        std::size_t b = std::min(batch_size, data.n - at);
        Tensor x = data.gather_range(at, b);
        Tensor out = model.forward(nullptr, x, false);
        const auto& xv = x.value();
        const auto& ov = out.value();
        for (std::size_t w = 0; w < b; ++w)
            for (std::size_t c = 0; c < data.f; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < data.t; ++r) {
                    std::size_t k = (w * data.t + r) * data.f + c;
                    acc += std::abs(ov[k] - xv[k]);
                }
                errors.at(at + w, c) = acc / static_cast<double>(data.t);
            }
    }
    return errors;
}

}  // namespace detail

inline ThresholdProfile calibrate(Model& model, const WindowedDataset& train_windows,
                                  double sensitivity = 1.0) {
    ThresholdProfile profile;
    profile.calibration_errors = detail::reconstruction_errors(model, train_windows);
    profile.per_feature_threshold.assign(train_windows.f, 0.0);
    profile.set_sensitivity(sensitivity);
    return profile;
}

struct PointLabels {
    std::vector<std::uint8_t> flags;   // [L] union over features and covering windows
    Matrix per_feature_flags;          // [L, F] 0/1
    Matrix window_errors;              // [N, F] test-window MAEs
    std::size_t series_len = 0;
};

/// Window w is anomalous in feature f iff its MAE strictly exceeds that
/// feature's threshold; a point is flagged iff some covering window is
/// anomalous (per feature for the per-feature table, any feature for the
/// union flags). Requires stride-1 windows so every point is covered.
inline PointLabels detect(Model& model, const ThresholdProfile& profile,
                          const WindowedDataset& test_windows) {
    if (test_windows.stride != 1)
        throw contract_error("detect requires stride-1 windows");
    if (profile.features() != test_windows.f)
        throw contract_error("profile has " + std::to_string(profile.features()) +
                             " features, windows have " + std::to_string(test_windows.f));
    PointLabels out;
    out.window_errors = detail::reconstruction_errors(model, test_windows);
    out.series_len = test_windows.start_indices.back() + test_windows.t;
    out.flags.assign(out.series_len, 0);
    out.per_feature_flags = Matrix(out.series_len, test_windows.f, 0.0);
    for (std::size_t w = 0; w < test_windows.n; ++w)
        for (std::size_t f = 0; f < test_windows.f; ++f) {
            if (!(out.window_errors.at(w, f) > profile.per_feature_threshold[f])) continue;
            std::size_t begin = test_windows.start_indices[w];
            for (std::size_t r = begin; r < begin + test_windows.t; ++r) {
                out.flags[r] = 1;
                out.per_feature_flags.at(r, f) = 1.0;
            }
        }
    return out;
}

// ---------------------------------------------------------------------------
// Calibration-error histogram (threshold diagnostics)
// ---------------------------------------------------------------------------

struct Histogram {
    std::vector<double> edges;        // bins+1 ascending edges
    std::vector<std::size_t> counts;  // per-bin counts, sum = N
    double threshold = 0.0;
};

inline Histogram error_histogram(const ThresholdProfile& profile, std::size_t feature,
                                 std::size_t bins) {
    if (feature >= profile.features())
        throw contract_error("feature index " + std::to_string(feature) + " out of range");
    if (bins < 1) throw contract_error("histogram needs at least one bin");
    const Matrix& errors = profile.calibration_errors;
    double lo = errors.at(0, feature), hi = lo;
    for (std::size_t w = 0; w < errors.rows; ++w) {
        lo = std::min(lo, errors.at(w, feature));
        hi = std::max(hi, errors.at(w, feature));
    }
    if (hi <= lo) hi = lo + 1.0;  // degenerate spread, single occupied bin
    Histogram h;
    h.threshold = profile.per_feature_threshold[feature];
    h.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    h.counts.assign(bins, 0);
    for (std::size_t w = 0; w < errors.rows; ++w) {
        double x = errors.at(w, feature);
        auto bin = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
        if (bin >= bins) bin = bins - 1;  // x == hi lands in the last bin
        ++h.counts[bin];
    }
    return h;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// index,flag,feature_0..feature_{F-1} rows.
inline void write_point_labels(std::ostream& os, const PointLabels& labels) {
    os << "index,flag";
    for (std::size_t f = 0; f < labels.per_feature_flags.cols; ++f) os << ",feature_" << f;
    os << "\n";
    for (std::size_t i = 0; i < labels.flags.size(); ++i) {
        os << i << ',' << static_cast<int>(labels.flags[i]);
        for (std::size_t f = 0; f < labels.per_feature_flags.cols; ++f)
            os << ',' << static_cast<int>(labels.per_feature_flags.at(i, f));
        os << "\n";
    }
}

inline void write_point_labels(const std::string& path, const PointLabels& labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    write_point_labels(os, labels);
}

/// bin_left,bin_right,count rows followed by the threshold annotation line.
inline void write_histogram(std::ostream& os, const Histogram& h) {
    os << "bin_left,bin_right,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i)
        os << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ','
           << h.counts[i] << "\n";
    os << "threshold," << format_double(h.threshold) << "\n";
}

inline void write_histogram(const std::string& path, const Histogram& h) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    write_histogram(os, h);
}

}  // namespace lstmcaps
