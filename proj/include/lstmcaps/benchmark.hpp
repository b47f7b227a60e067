#pragma once

// Benchmark loop over labelled subsets: for each subset, train on the clean
// prefix, calibrate thresholds, detect over the remainder, and score with
// F1 / FAR / MAR plus the NAB changepoint metric; per-dataset scores are
// averaged into the run aggregate, and runs differ only by seed.

#include <algorithm>
#include <ostream>

#include "lstmcaps/checkpoint.hpp"
#include "lstmcaps/metrics.hpp"
#include "lstmcaps/train.hpp"

namespace lstmcaps {

struct LabeledSeries {
    std::string name;
    Matrix series;
    std::vector<std::uint8_t> anomaly;
    std::vector<std::uint8_t> changepoint;
};

struct BenchmarkOptions {
    double sensitivity = 1.0;
    double nab_portion = 0.1;
    WindowPlacement nab_placement = WindowPlacement::center;
    double probation_fraction = 0.0;
};

struct DatasetScore {
    std::string name;
    double f1 = 0.0, far = 0.0, mar = 0.0;
    double nab_standard = 0.0, nab_low_fp = 0.0, nab_low_fn = 0.0;
    double scaled_avg = 0.0;
    std::size_t train_rows = 0, test_rows = 0, truth_windows = 0;
};

struct RunScores {
    std::uint64_t seed = 0;
    std::vector<DatasetScore> per_dataset;
    DatasetScore aggregate;  // name = "aggregate"
};

struct BenchmarkResult {
    std::vector<RunScores> runs;
    DatasetScore mean_of_runs;      // mean of run aggregates
    std::size_t best_outlier_run = 0;      // index of run with highest aggregate F1
    std::size_t best_changepoint_run = 0;  // index of run with highest NAB(standard)
    std::uint64_t base_seed = 0;
    double wall_seconds = 0.0;  // reported via manifest only, never hashed
};

namespace detail {

inline DatasetScore average_scores(const std::vector<DatasetScore>& scores) {
    DatasetScore agg;
    agg.name = "aggregate";
    if (scores.empty()) return agg;
    for (const DatasetScore& s : scores) {
        agg.f1 += s.f1;
        agg.far += s.far;
        agg.mar += s.mar;
        agg.nab_standard += s.nab_standard;
        agg.nab_low_fp += s.nab_low_fp;
        agg.nab_low_fn += s.nab_low_fn;
        agg.train_rows += s.train_rows;
        agg.test_rows += s.test_rows;
        agg.truth_windows += s.truth_windows;
    }
    auto n = static_cast<double>(scores.size());
    agg.f1 /= n;
    agg.far /= n;
    agg.mar /= n;
    agg.nab_standard /= n;
    agg.nab_low_fp /= n;
    agg.nab_low_fn /= n;
    agg.scaled_avg = scaled_average(agg.f1, agg.nab_standard);
    return agg;
}

/// Longest clean prefix (no anomaly label) used as the training slice.
inline std::size_t clean_prefix_rows(const LabeledSeries& ds) {
    std::size_t p = 0;
    while (p < ds.anomaly.size() && ds.anomaly[p] == 0) ++p;
    return p;
}

}  // namespace detail

/// Trains/evaluates one subset with the given seed and returns its scores.
inline DatasetScore benchmark_dataset(const LabeledSeries& ds, const ModelSpec& model_spec,
                                      const TrainConfig& train_cfg, const BenchmarkOptions& opt,
                                      std::uint64_t seed) {
    std::size_t t = model_spec.timesteps;
    if (ds.anomaly.size() != ds.series.rows)
        throw dataset_error(ds.name + ": missing or misaligned anomaly labels");
    std::size_t prefix = detail::clean_prefix_rows(ds);
    if (prefix < 2 * t)
        throw dataset_error(ds.name + ": clean training prefix of " + std::to_string(prefix) +
                            " rows is shorter than 2 windows");
    if (ds.series.rows - prefix < t)
        throw dataset_error(ds.name + ": labelled remainder shorter than one window");

    Matrix train_slice(prefix, ds.series.cols);
    std::copy_n(ds.series.v.data(), prefix * ds.series.cols, train_slice.v.data());
    PreparedData prep = prepare_training_data(train_slice, t, 1, train_cfg.val_fraction);

    ModelSpec spec = model_spec;
    spec.n_features = ds.series.cols;
    spec.seed = seed;
    TrainConfig cfg = train_cfg;
    cfg.seed = seed;

    Model model = Model::build(spec);
    train(model, prep.windows, cfg);
    ThresholdProfile profile = calibrate(model, prep.windows, opt.sensitivity);

    std::size_t test_rows = ds.series.rows - prefix;
    Matrix test_slice(test_rows, ds.series.cols);
    std::copy_n(ds.series.v.data() + prefix * ds.series.cols, test_rows * ds.series.cols,
                test_slice.v.data());
    WindowedDataset test_windows = make_windows(apply_normalizer(prep.stats, test_slice), t, 1);
    PointLabels labels = detect(model, profile, test_windows);

    std::vector<std::uint8_t> truth(ds.anomaly.begin() + static_cast<std::ptrdiff_t>(prefix),
                                    ds.anomaly.end());
    bool any_pos = std::find(truth.begin(), truth.end(), 1) != truth.end();
    bool any_neg = std::find(truth.begin(), truth.end(), 0) != truth.end();
    if (!any_pos || !any_neg)
        throw dataset_error(ds.name + ": test remainder needs both labelled classes");

    DatasetScore score;
    score.name = ds.name;
    score.train_rows = prefix;
    score.test_rows = test_rows;
    ConfusionCounts c = confusion(labels.flags, truth);
    score.f1 = f1(c);
    auto [far, mar] = far_mar(c);
    score.far = far;
    score.mar = mar;

    std::vector<std::uint8_t> cp;
    if (ds.changepoint.size() == ds.series.rows)
        cp.assign(ds.changepoint.begin() + static_cast<std::ptrdiff_t>(prefix),
                  ds.changepoint.end());
    std::vector<TruthWindow> windows =
        changepoint_windows(cp.empty() ? std::vector<std::uint8_t>(test_rows, 0) : cp,
                            opt.nab_portion, opt.nab_placement);
    score.truth_windows = windows.size();
    score.nab_standard =
        nab_score(labels.flags, windows, NabProfile::standard(), opt.probation_fraction);
    score.nab_low_fp = nab_score(labels.flags, windows, NabProfile::low_fp(), opt.probation_fraction);
    score.nab_low_fn = nab_score(labels.flags, windows, NabProfile::low_fn(), opt.probation_fraction);
    score.scaled_avg = scaled_average(score.f1, score.nab_standard);
    return score;
}

inline BenchmarkResult run_benchmark(std::vector<LabeledSeries> datasets,
                                     const ModelSpec& model_spec, const TrainConfig& train_cfg,
                                     const BenchmarkOptions& opt, std::size_t n_runs) {
    if (datasets.empty()) throw dataset_error("benchmark needs at least one dataset");
    if (n_runs < 1) throw contract_error("n_runs must be >= 1");
    std::sort(datasets.begin(), datasets.end(),
              [](const LabeledSeries& a, const LabeledSeries& b) { return a.name < b.name; });

    BenchmarkResult result;
    result.base_seed = train_cfg.seed;
    for (std::size_t run = 0; run < n_runs; ++run) {
        RunScores rs;
        rs.seed = train_cfg.seed + run;
        for (std::size_t k = 0; k < datasets.size(); ++k) {
            std::uint64_t ds_seed = mix_seed(rs.seed, 100 + k);
            rs.per_dataset.push_back(
                benchmark_dataset(datasets[k], model_spec, train_cfg, opt, ds_seed));
        }
        rs.aggregate = detail::average_scores(rs.per_dataset);
        result.runs.push_back(std::move(rs));
    }

    std::vector<DatasetScore> aggregates;
    for (const RunScores& rs : result.runs) aggregates.push_back(rs.aggregate);
    result.mean_of_runs = detail::average_scores(aggregates);
    result.mean_of_runs.name = "mean_of_runs";

    for (std::size_t i = 0; i < result.runs.size(); ++i) {
        if (result.runs[i].aggregate.f1 > result.runs[result.best_outlier_run].aggregate.f1)
            result.best_outlier_run = i;
        if (result.runs[i].aggregate.nab_standard >
            result.runs[result.best_changepoint_run].aggregate.nab_standard)
            result.best_changepoint_run = i;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Design comparison (capsules vs none, branched vs not, at matched capacity)
// ---------------------------------------------------------------------------

struct DesignRunStats {
    char design = 'A';
    std::size_t parameter_count = 0;
    std::vector<double> final_train, final_val;  // one entry per run
    double avg_train = 0.0, avg_val = 0.0;
    double overfit_pct = 0.0;  // from the averaged losses
};

struct CompareReport {
    std::vector<DesignRunStats> designs;  // order A, B, C, D
    double improvement_a_vs_b = 0.0;      // % validation-loss gain of A over B
    double improvement_c_vs_d = 0.0;
    std::size_t n_runs = 0;
};

/// Trains the parameter-matched quartet n_runs times (fresh seed per run,
/// shared across designs within a run) on one healthy series and tabulates
/// final losses, overfit percentages and capsule improvements.
inline CompareReport compare_designs(const Matrix& healthy_series, const ModelSpec& ref_a,
                                     const TrainConfig& base_cfg, std::size_t n_runs) {
    if (n_runs < 1) throw contract_error("n_runs must be >= 1");
    DesignQuartet quartet = match_parameter_counts(ref_a);
    PreparedData prep =
        prepare_training_data(healthy_series, ref_a.timesteps, 1, base_cfg.val_fraction);

    CompareReport report;
    report.n_runs = n_runs;
    const ModelSpec* specs[4] = {&quartet.a, &quartet.b, &quartet.c, &quartet.d};
    for (const ModelSpec* spec : specs) {
        DesignRunStats stats;
        stats.design = design_letter(spec->design);
        stats.parameter_count = count_parameters(*spec);
        for (std::size_t run = 0; run < n_runs; ++run) {
            ModelSpec s = *spec;
            s.seed = mix_seed(base_cfg.seed, 200 + run);
            TrainConfig cfg = base_cfg;
            cfg.seed = s.seed;
            Model model = Model::build(s);
            TrainReport tr = train(model, prep.windows, cfg);
            stats.final_train.push_back(tr.final_train_loss);
            stats.final_val.push_back(tr.final_val_loss);
        }
        for (double v : stats.final_train) stats.avg_train += v;
        for (double v : stats.final_val) stats.avg_val += v;
        stats.avg_train /= static_cast<double>(n_runs);
        stats.avg_val /= static_cast<double>(n_runs);
        stats.overfit_pct = overfit_percentage(stats.avg_train, stats.avg_val);
        report.designs.push_back(std::move(stats));
    }
    report.improvement_a_vs_b =
        val_loss_improvement(report.designs[0].avg_val, report.designs[1].avg_val);
    report.improvement_c_vs_d =
        val_loss_improvement(report.designs[2].avg_val, report.designs[3].avg_val);
    return report;
}

inline void write_compare_report(std::ostream& os, const CompareReport& r) {
    os << "design,parameters,avg_final_train_loss,avg_final_val_loss,overfit_pct,"
          "val_loss_improvement_pct\n";
    for (const DesignRunStats& d : r.designs) {
        os << d.design << ',' << d.parameter_count << ',' << format_double(d.avg_train) << ','
           << format_double(d.avg_val) << ',' << format_double(d.overfit_pct) << ',';
        if (d.design == 'A')
            os << format_double(r.improvement_a_vs_b);
        else if (d.design == 'C')
            os << format_double(r.improvement_c_vs_d);
        else
            os << "n/a";
        os << "\n";
    }
}

}  // namespace lstmcaps
