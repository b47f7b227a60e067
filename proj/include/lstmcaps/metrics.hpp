#pragma once

// Scoring: point-level confusion counts, F1, false/missed alarm rates, the
// NAB changepoint metric under its three application profiles, and the
// composite (F1 + NAB/100)/2 ranking score.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lstmcaps/common.hpp"

namespace lstmcaps {

// ---------------------------------------------------------------------------
// Outlier metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t total() const { return tp + fp + fn + tn; }
};

inline ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                                 const std::vector<std::uint8_t>& truth) {
    if (pred.size() != truth.size())
        throw contract_error("confusion: prediction length " + std::to_string(pred.size()) +
                             " != truth length " + std::to_string(truth.size()));
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] && truth[i])
            ++c.tp;
        else if (pred[i] && !truth[i])
            ++c.fp;
        else if (!pred[i] && truth[i])
            ++c.fn;
        else
            ++c.tn;
    }
    return c;
}

/// F1 = TP / (TP + (FP + FN)/2); defined as 0 when TP+FP+FN = 0.
inline double f1(const ConfusionCounts& c) {
    double denom = static_cast<double>(c.tp) + 0.5 * static_cast<double>(c.fp + c.fn);
    if (denom == 0.0) return 0.0;
    return static_cast<double>(c.tp) / denom;
}

/// (FAR%, MAR%) = (100*FP/(FP+TN), 100*FN/(FN+TP)).
inline std::pair<double, double> far_mar(const ConfusionCounts& c) {
    if (c.fp + c.tn == 0) throw undefined_rate_error("FAR undefined: no negative truth points");
    if (c.fn + c.tp == 0) throw undefined_rate_error("MAR undefined: no positive truth points");
    double far = 100.0 * static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn);
    double mar = 100.0 * static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp);
    return {far, mar};
}

// ---------------------------------------------------------------------------
// NAB changepoint metric
// ---------------------------------------------------------------------------

/// Application profile weights. w_fp and w_fn are stored as the (negative)
/// contributions of a worst-case false positive / missed window; w_tp is the
/// reward of a detection at the left edge of a window.
struct NabProfile {
    std::string name;
    double w_tp = 1.0;
    double w_fp = -0.11;
    double w_fn = -1.0;

    void validate() const {
        if (!(std::isfinite(w_tp) && std::isfinite(w_fp) && std::isfinite(w_fn)))
            throw contract_error("NAB profile weights must be finite");
        if (w_fp > 0.0 || w_tp < 0.0)
            throw contract_error("NAB profile requires w_fp <= 0 <= w_tp");
    }

    static NabProfile standard() { return {"standard", 1.0, -0.11, -1.0}; }
    static NabProfile low_fp() { return {"lowFP", 1.0, -0.22, -1.0}; }
    static NabProfile low_fn() { return {"lowFN", 1.0, -0.11, -2.0}; }
};

/// Inclusive truth window [begin, end].
struct TruthWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
};

namespace detail {

/// 2*sigmoid(-5y) - 1, clamped to -1 for y > 3: +0.9866 one window-width
/// before a window's right edge, 0 at the right edge, -0.9866 one width past.
inline double nab_scaled_sigmoid(double y) {
    if (y > 3.0) return -1.0;
    return 2.0 / (1.0 + std::exp(5.0 * y)) - 1.0;
}

inline void check_windows(const std::vector<TruthWindow>& windows, std::size_t len) {
    for (std::size_t i = 0; i < windows.size(); ++i) {
        if (windows[i].begin > windows[i].end || windows[i].end >= len)
            throw contract_error("malformed truth window [" + std::to_string(windows[i].begin) +
                                 ", " + std::to_string(windows[i].end) + "]");
        if (i > 0 && windows[i].begin <= windows[i - 1].end)
            throw contract_error("truth windows must be sorted and non-overlapping");
    }
}

}  // namespace detail

/// Unnormalised NAB score. Each truth window contributes the sigmoid-weighted
/// credit of its earliest detection (w_tp at the left edge, ~0 at the right)
/// or w_fn if undetected. Detections outside all windows are penalised in
/// proportion to |w_fp|, saturating with distance past the preceding window;
/// detections before the first window take the full penalty. Detections in
/// the probationary prefix are ignored.
inline double nab_raw(const std::vector<std::uint8_t>& flags,
                      const std::vector<TruthWindow>& windows, const NabProfile& profile,
                      double probation_fraction = 0.0) {
    profile.validate();
    detail::check_windows(windows, flags.size());
    if (probation_fraction < 0.0 || probation_fraction >= 1.0)
        throw contract_error("probation_fraction must be in [0, 1)");
    auto probation =
        static_cast<std::size_t>(std::floor(probation_fraction * static_cast<double>(flags.size())));

    const double max_tp = detail::nab_scaled_sigmoid(-1.0);
    double score = 0.0;

    for (const TruthWindow& w : windows) {
        double width = static_cast<double>(w.end - w.begin + 1);
        bool detected = false;
        double best = 0.0;
        for (std::size_t i = w.begin; i <= w.end; ++i) {
            if (i < probation || !flags[i]) continue;
            double position = -(static_cast<double>(w.end - i) + 1.0) / width;
            double credit = detail::nab_scaled_sigmoid(position) * profile.w_tp / max_tp;
            if (!detected || credit > best) best = credit;
            detected = true;
        }
        score += detected ? best : profile.w_fn;
    }

    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (i < probation || !flags[i]) continue;
        bool inside = false;
        const TruthWindow* prev = nullptr;
        for (const TruthWindow& w : windows) {
            if (i >= w.begin && i <= w.end) {
                inside = true;
                break;
            }
            if (w.end < i) prev = &w;
        }
        if (inside) continue;
        double unweighted;
        if (!prev) {
            unweighted = -1.0;
        } else {
            double denom = static_cast<double>(prev->end - prev->begin);  // width - 1
            unweighted = denom <= 0.0
                             ? -1.0
                             : detail::nab_scaled_sigmoid(static_cast<double>(i - prev->end) / denom);
        }
        score += unweighted * (-profile.w_fp);
    }
    return score;
}

/// Normalised NAB score: 100 * (raw - raw_null) / (raw_perfect - raw_null),
/// so a null detector scores 0 and a perfect one 100. Can be negative when
/// false positives outweigh the null baseline. 0 when there are no windows.
inline double nab_score(const std::vector<std::uint8_t>& flags,
                        const std::vector<TruthWindow>& windows, const NabProfile& profile,
                        double probation_fraction = 0.0) {
    double raw = nab_raw(flags, windows, profile, probation_fraction);
    double n = static_cast<double>(windows.size());
    double raw_null = profile.w_fn * n;
    double raw_perfect = profile.w_tp * n;
    if (raw_perfect == raw_null) return 0.0;
    return 100.0 * (raw - raw_null) / (raw_perfect - raw_null);
}

// ---------------------------------------------------------------------------
// Composite score
// ---------------------------------------------------------------------------

/// (F1 + NAB/100) / 2; negative NAB clamps to 0 first so the composite never
/// drops below the null anchor.
inline double scaled_average(double f1_score, double nab_standard) {
    double nab = std::max(nab_standard, 0.0);
    return (f1_score + nab / 100.0) / 2.0;
}

// ---------------------------------------------------------------------------
// Truth-window construction from changepoint labels
// ---------------------------------------------------------------------------

enum class WindowPlacement { left, center, right };

/// Builds NAB truth windows around each labelled changepoint. Total window
/// budget is `portion` of the series length split evenly across changepoints
/// (the NAB convention); windows are clipped to the series and merged when
/// they collide.
inline std::vector<TruthWindow> changepoint_windows(const std::vector<std::uint8_t>& labels,
                                                    double portion = 0.1,
                                                    WindowPlacement placement = WindowPlacement::center) {
    if (portion <= 0.0 || portion > 1.0) throw contract_error("portion must be in (0, 1]");
    std::vector<std::size_t> points;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i]) points.push_back(i);
    if (points.empty()) return {};

    std::size_t len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(portion * static_cast<double>(labels.size()) /
                                                 static_cast<double>(points.size()))));
    std::vector<TruthWindow> windows;
    for (std::size_t cp : points) {
        std::size_t begin, end;
        switch (placement) {
            case WindowPlacement::left:
                begin = cp >= len - 1 ? cp - (len - 1) : 0;
                end = cp;
                break;
            case WindowPlacement::right:
                begin = cp;
                end = cp + len - 1;
                break;
            case WindowPlacement::center:
            default:
                begin = cp >= len / 2 ? cp - len / 2 : 0;
                end = begin + len - 1;
                break;
        }
        end = std::min(end, labels.size() - 1);
        if (!windows.empty() && begin <= windows.back().end)
            windows.back().end = std::max(windows.back().end, end);
        else
            windows.push_back({begin, end});
    }
    return windows;
}

}  // namespace lstmcaps
