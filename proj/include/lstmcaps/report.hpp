#pragma once

// Benchmark report (JSON), leaderboard row (flat CSV) and run manifest.
// Reports carry only deterministic values; wall time and timestamps live in
// the manifest, which is excluded from reproducibility comparisons.

#include <iomanip>

#include "json.hpp"

#include "lstmcaps/benchmark.hpp"
#include "lstmcaps/config.hpp"

namespace lstmcaps {

namespace detail {

inline nlohmann::json score_json(const DatasetScore& s) {
    return nlohmann::json{{"name", s.name},
                          {"f1", s.f1},
                          {"far_pct", s.far},
                          {"mar_pct", s.mar},
                          {"nab_standard", s.nab_standard},
                          {"nab_low_fp", s.nab_low_fp},
                          {"nab_low_fn", s.nab_low_fn},
                          {"scaled_average", s.scaled_avg},
                          {"train_rows", s.train_rows},
                          {"test_rows", s.test_rows},
                          {"truth_windows", s.truth_windows}};
}

}  // namespace detail

inline nlohmann::json benchmark_report_json(const BenchmarkResult& r, const RunConfig& cfg) {
    nlohmann::json runs = nlohmann::json::array();
    for (const RunScores& rs : r.runs) {
        nlohmann::json datasets = nlohmann::json::array();
        for (const DatasetScore& d : rs.per_dataset) datasets.push_back(detail::score_json(d));
        runs.push_back(nlohmann::json{{"seed", rs.seed},
                                      {"datasets", datasets},
                                      {"aggregate", detail::score_json(rs.aggregate)}});
    }
    char hash_hex[19];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    return nlohmann::json{
        {"app_version", kVersion},
        {"config_hash", hash_hex},
        {"base_seed", r.base_seed},
        {"n_runs", r.runs.size()},
        {"sensitivity", cfg.sensitivity},
        {"runs", runs},
        {"mean_of_runs", detail::score_json(r.mean_of_runs)},
        {"best_outlier", detail::score_json(r.runs[r.best_outlier_run].aggregate)},
        {"best_outlier_seed", r.runs[r.best_outlier_run].seed},
        {"best_changepoint", detail::score_json(r.runs[r.best_changepoint_run].aggregate)},
        {"best_changepoint_seed", r.runs[r.best_changepoint_run].seed},
    };
}

inline void write_benchmark_report(const std::string& path, const BenchmarkResult& r,
                                   const RunConfig& cfg) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    os << benchmark_report_json(r, cfg).dump(2) << "\n";
}

/// Fixed field order (documented in the README):
/// method,design,timesteps,branch_width,sensitivity,n_runs,
/// f1_mean,far_mean,mar_mean,nab_standard_mean,nab_low_fp_mean,nab_low_fn_mean,
/// scaled_avg_mean,f1_best,nab_standard_best,scaled_avg_best,config_hash
inline std::string leaderboard_row(const BenchmarkResult& r, const RunConfig& cfg) {
    const DatasetScore& mean = r.mean_of_runs;
    const DatasetScore& best_f1 = r.runs[r.best_outlier_run].aggregate;
    const DatasetScore& best_nab = r.runs[r.best_changepoint_run].aggregate;
    char hash_hex[19];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    std::ostringstream os;
    os << "lstmcaps," << design_letter(cfg.design) << ',' << cfg.timesteps << ','
       << cfg.branch_width << ',' << format_double(cfg.sensitivity) << ',' << r.runs.size() << ','
       << format_double(mean.f1) << ',' << format_double(mean.far) << ','
       << format_double(mean.mar) << ',' << format_double(mean.nab_standard) << ','
       << format_double(mean.nab_low_fp) << ',' << format_double(mean.nab_low_fn) << ','
       << format_double(mean.scaled_avg) << ',' << format_double(best_f1.f1) << ','
       << format_double(best_nab.nab_standard) << ','
       << format_double(std::max(best_f1.scaled_avg, best_nab.scaled_avg)) << ',' << hash_hex;
    return os.str();
}

inline constexpr const char* kLeaderboardHeader =
    "method,design,timesteps,branch_width,sensitivity,n_runs,f1_mean,far_mean,mar_mean,"
    "nab_standard_mean,nab_low_fp_mean,nab_low_fn_mean,scaled_avg_mean,f1_best,"
    "nab_standard_best,scaled_avg_best,config_hash";

/// Run provenance; the one artifact allowed to differ between identical runs.
inline void write_manifest(const std::string& path, const RunConfig& cfg,
                           const std::string& command, double wall_seconds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    char hash_hex[19];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(cfg.hash()));
    os << "command " << command << "\n"
       << "config_hash " << hash_hex << "\n"
       << "seed " << cfg.seed << "\n"
       << "app_version " << kVersion << "\n"
       << "checkpoint_format_version " << kCheckpointVersion << "\n"
       << "wall_seconds " << format_double(wall_seconds) << "\n";
}

}  // namespace lstmcaps
