// Command-line pipeline: generate synthetic data, train a detector, flag
// anomalies, run the benchmark loop, or compare the four designs at matched
// parameter counts.

#include <chrono>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "lstmcaps/lstmcaps.hpp"

namespace fs = std::filesystem;
using namespace lstmcaps;

namespace {

struct CliFlags {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
    std::string data;        // train/input csv
    std::string test;        // detect target csv
    std::string checkpoint;  // detect model
    std::string design;
    double sensitivity = -1.0;
    long long seed = -1;
    bool skab_preset = false;
    bool verbose = false;
};

void add_common_flags(CLI::App* cmd, CliFlags& f) {
    cmd->add_option("--config", f.config_path, "key=value config file");
    cmd->add_option("--set", f.sets, "override a config key, e.g. --set epochs=50")
        ->take_all();
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--seed", f.seed, "RNG seed");
    cmd->add_option("--sensitivity", f.sensitivity, "threshold sensitivity multiplier");
    cmd->add_option("--design", f.design, "model design: A, B, C or D");
    cmd->add_flag("--skab-preset", f.skab_preset, "semicolon CSV with datetime + anomaly/changepoint columns");
    cmd->add_flag("--verbose", f.verbose, "per-epoch progress on stderr");
}

RunConfig assemble(const CliFlags& f, bool data_is_dir = false) {
    RunConfig cfg;
    if (!f.config_path.empty()) cfg.load_file(f.config_path);
    for (const std::string& kv : f.sets) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
    if (f.sensitivity > 0.0) cfg.sensitivity = f.sensitivity;
    if (!f.design.empty()) {
        if (f.design.size() != 1) throw config_error("--design expects A, B, C or D");
        cfg.design = design_from_letter(f.design[0]);
    }
    if (f.skab_preset) cfg.skab_preset = true;
    if (!f.data.empty()) (data_is_dir ? cfg.data_dir : cfg.train_csv) = f.data;
    if (!f.test.empty()) cfg.test_csv = f.test;
    if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
    if (f.verbose) cfg.verbose = true;
    cfg.validate();
    return cfg;
}

std::string out_path(const RunConfig& cfg, const std::string& file) {
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / file).string();
}

/// Feature matrix for training; falls back to a clean synthetic series when
/// no CSV is configured.
Matrix healthy_series(const RunConfig& cfg) {
    if (!cfg.train_csv.empty()) return load_csv(cfg.series_file(cfg.train_csv)).series;
    SyntheticConfig sc = cfg.synthetic_config(mix_seed(cfg.seed, 500));
    sc.anomaly.count = 0;
    return generate_synthetic(sc).series;
}

void check_feature_count(const RunConfig& cfg, std::size_t data_features) {
    if (cfg.n_features != 0 && cfg.n_features != data_features)
        throw config_error("config n_features=" + std::to_string(cfg.n_features) +
                           " but data has " + std::to_string(data_features) + " features");
}

std::vector<LabeledSeries> benchmark_datasets(const RunConfig& cfg) {
    std::vector<LabeledSeries> out;
    if (!cfg.data_dir.empty()) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(cfg.data_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".csv")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw dataset_error("no .csv files in " + cfg.data_dir);
        for (const fs::path& p : files) {
            LoadedSeries ls = load_csv(cfg.series_file(p.string()));
            if (ls.anomaly.empty())
                throw dataset_error(p.string() + " has no anomaly labels; cannot benchmark");
            LabeledSeries ds;
            ds.name = p.stem().string();
            ds.series = std::move(ls.series);
            ds.anomaly = std::move(ls.anomaly);
            ds.changepoint = std::move(ls.changepoint);
            out.push_back(std::move(ds));
        }
        return out;
    }
    for (std::size_t k = 0; k < cfg.synth_subsets; ++k) {
        SyntheticSeries s = generate_synthetic(cfg.synthetic_config(mix_seed(cfg.seed, 500 + k)));
        LabeledSeries ds;
        char name[32];
        std::snprintf(name, sizeof(name), "synthetic_%02zu", k);
        ds.name = name;
        ds.series = std::move(s.series);
        ds.anomaly = std::move(s.anomaly);
        ds.changepoint = std::move(s.changepoint);
        out.push_back(std::move(ds));
    }
    return out;
}

int cmd_generate(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> names(cfg.synth_features);
    for (std::size_t f = 0; f < cfg.synth_features; ++f) names[f] = "f" + std::to_string(f);
    for (std::size_t k = 0; k < cfg.synth_subsets; ++k) {
        SyntheticSeries s = generate_synthetic(cfg.synthetic_config(mix_seed(cfg.seed, 500 + k)));
        char file[48];
        std::snprintf(file, sizeof(file), "synthetic_%02zu.csv", k);
        write_series_csv(out_path(cfg, file), s.series, names, &s.anomaly, &s.changepoint);
        std::cout << "wrote " << (fs::path(cfg.out_dir) / file).string() << "\n";
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(out_path(cfg, "manifest.txt"), cfg, "generate", wall);
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Matrix series = healthy_series(cfg);
    check_feature_count(cfg, series.cols);

    ModelSpec spec = cfg.model_spec();
    spec.n_features = series.cols;
    PreparedData prep = prepare_training_data(series, spec.timesteps, 1, cfg.val_fraction);

    Model model = Model::build(spec);
    TrainReport report = train(model, prep.windows, cfg.train_config());
    ThresholdProfile profile = calibrate(model, prep.windows, cfg.sensitivity);

    save_checkpoint(out_path(cfg, "checkpoint.bin"), model, prep.stats, &profile);
    write_train_report(out_path(cfg, "train_report.txt"), report);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(out_path(cfg, "manifest.txt"), cfg, "train", wall);

    std::cout << "trained design " << design_letter(spec.design) << " ("
              << model.parameter_element_count() << " parameters) for " << report.epochs_run
              << " epochs\n"
              << "best epoch " << report.best_epoch << ", val loss "
              << format_double(report.best_val_loss) << "\n"
              << "checkpoint: " << (fs::path(cfg.out_dir) / "checkpoint.bin").string() << "\n";
    return 0;
}

int cmd_detect(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    if (cfg.checkpoint.empty()) throw config_error("detect needs checkpoint=<path>");
    Checkpoint ck = load_checkpoint(cfg.checkpoint);
    if (!ck.has_profile) throw config_error("checkpoint has no threshold profile");
    Model model = restore_model(ck);

    LoadedSeries test;
    if (!cfg.test_csv.empty()) {
        test = load_csv(cfg.series_file(cfg.test_csv));
    } else {
        SyntheticSeries s = generate_synthetic(cfg.synthetic_config(mix_seed(cfg.seed, 501)));
        test.series = std::move(s.series);
        test.anomaly = std::move(s.anomaly);
        test.changepoint = std::move(s.changepoint);
    }
    if (test.series.cols != ck.stats.features())
        throw config_error("test data has " + std::to_string(test.series.cols) +
                           " features, checkpoint expects " +
                           std::to_string(ck.stats.features()));

    ThresholdProfile profile = ck.profile;
    if (cfg.sensitivity != profile.sensitivity) profile.set_sensitivity(cfg.sensitivity);

    WindowedDataset windows =
        make_windows(apply_normalizer(ck.stats, test.series), ck.spec.timesteps, 1);
    PointLabels labels = detect(model, profile, windows);

    write_point_labels(out_path(cfg, "labels.csv"), labels);
    for (std::size_t f = 0; f < profile.features(); ++f) {
        char file[48];
        std::snprintf(file, sizeof(file), "histogram_feature_%zu.csv", f);
        write_histogram(out_path(cfg, file), error_histogram(profile, f, 40));
    }

    std::size_t flagged = 0;
    for (auto v : labels.flags) flagged += v;
    std::cout << "flagged " << flagged << " of " << labels.flags.size() << " points\n";

    if (!test.anomaly.empty()) {
        ConfusionCounts c = confusion(labels.flags, test.anomaly);
        std::ofstream ms(out_path(cfg, "detect_metrics.txt"), std::ios::binary);
        ms << "tp " << c.tp << "\nfp " << c.fp << "\nfn " << c.fn << "\ntn " << c.tn << "\n";
        ms << "f1 " << format_double(f1(c)) << "\n";
        if (c.fp + c.tn > 0 && c.fn + c.tp > 0) {
            auto [far, mar] = far_mar(c);
            ms << "far_pct " << format_double(far) << "\nmar_pct " << format_double(mar) << "\n";
        }
        if (!test.changepoint.empty()) {
            auto wins = changepoint_windows(test.changepoint, cfg.nab_portion,
                                            cfg.benchmark_options().nab_placement);
            ms << "nab_standard "
               << format_double(nab_score(labels.flags, wins, NabProfile::standard(),
                                          cfg.probation_fraction))
               << "\n";
        }
        std::cout << "f1 " << format_double(f1(c)) << "\n";
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(out_path(cfg, "manifest.txt"), cfg, "detect", wall);
    return 0;
}

int cmd_benchmark(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<LabeledSeries> datasets = benchmark_datasets(cfg);
    for (const auto& ds : datasets) check_feature_count(cfg, ds.series.cols);

    BenchmarkResult result = run_benchmark(datasets, cfg.model_spec(), cfg.train_config(),
                                           cfg.benchmark_options(), cfg.runs);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_benchmark_report(out_path(cfg, "benchmark_report.json"), result, cfg);
    {
        std::ofstream os(out_path(cfg, "leaderboard.csv"), std::ios::binary);
        os << kLeaderboardHeader << "\n" << leaderboard_row(result, cfg) << "\n";
    }
    write_manifest(out_path(cfg, "manifest.txt"), cfg, "benchmark", result.wall_seconds);

    const DatasetScore& m = result.mean_of_runs;
    std::cout << "datasets " << datasets.size() << ", runs " << result.runs.size() << "\n"
              << "mean F1 " << format_double(m.f1) << "  FAR% " << format_double(m.far)
              << "  MAR% " << format_double(m.mar) << "\n"
              << "mean NAB standard/lowFP/lowFN " << format_double(m.nab_standard) << " / "
              << format_double(m.nab_low_fp) << " / " << format_double(m.nab_low_fn) << "\n"
              << "scaled average " << format_double(m.scaled_avg) << "\n";
    return 0;
}

int cmd_compare_designs(const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    Matrix series = healthy_series(cfg);
    check_feature_count(cfg, series.cols);

    ModelSpec ref = cfg.model_spec();
    ref.design = Design::A;
    ref.n_features = series.cols;

    // Fixed-epoch protocol: the design comparison always runs the full
    // epoch budget so final losses are comparable across designs.
    TrainConfig tc = cfg.train_config();
    tc.early_stopping = false;

    CompareReport report = compare_designs(series, ref, tc, cfg.runs);
    {
        std::ofstream os(out_path(cfg, "compare_report.csv"), std::ios::binary);
        write_compare_report(os, report);
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(out_path(cfg, "manifest.txt"), cfg, "compare-designs", wall);

    std::cout << "design  params  avg_train    avg_val      overfit%   val_improvement%\n";
    for (const DesignRunStats& d : report.designs) {
        char line[160];
        const char* imp = "      n/a";
        char impbuf[32];
        if (d.design == 'A') {
            std::snprintf(impbuf, sizeof(impbuf), "%9.2f", report.improvement_a_vs_b);
            imp = impbuf;
        } else if (d.design == 'C') {
            std::snprintf(impbuf, sizeof(impbuf), "%9.2f", report.improvement_c_vs_d);
            imp = impbuf;
        }
        std::snprintf(line, sizeof(line), "%c  %8zu  %-11.5g  %-11.5g  %9.2f  %s", d.design,
                      d.parameter_count, d.avg_train, d.avg_val, d.overfit_pct, imp);
        std::cout << line << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Branched LSTM-capsule autoencoder anomaly detection for multivariate time series"};
    app.require_subcommand(1);

    CliFlags flags[5];
    CLI::App* generate = app.add_subcommand("generate", "write seeded synthetic benchmark subsets");
    add_common_flags(generate, flags[0]);
    CLI::App* train_cmd = app.add_subcommand("train", "train a detector on healthy data");
    add_common_flags(train_cmd, flags[1]);
    train_cmd->add_option("--data", flags[1].data, "training csv (healthy series)");
    CLI::App* detect_cmd = app.add_subcommand("detect", "flag anomalies with a trained checkpoint");
    add_common_flags(detect_cmd, flags[2]);
    detect_cmd->add_option("--checkpoint", flags[2].checkpoint, "checkpoint file from train");
    detect_cmd->add_option("--data", flags[2].test, "csv to scan for anomalies");
    CLI::App* bench = app.add_subcommand("benchmark", "train/score over labelled subsets");
    add_common_flags(bench, flags[3]);
    bench->add_option("--data-dir", flags[3].data, "directory of labelled csv subsets");
    CLI::App* compare = app.add_subcommand("compare-designs",
                                           "train the matched A/B/C/D quartet and tabulate losses");
    add_common_flags(compare, flags[4]);
    compare->add_option("--data", flags[4].data, "training csv (healthy series)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(assemble(flags[0]));
        if (train_cmd->parsed()) return cmd_train(assemble(flags[1]));
        if (detect_cmd->parsed()) return cmd_detect(assemble(flags[2]));
        if (bench->parsed()) return cmd_benchmark(assemble(flags[3], /*data_is_dir=*/true));
        if (compare->parsed()) return cmd_compare_designs(assemble(flags[4]));
    } catch (const lstmcaps::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
