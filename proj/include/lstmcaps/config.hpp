#pragma once

// Plain-text key=value run configuration with command-line overrides. Every
// key is validated before any computation; unknown keys are rejected.

#include <fstream>
#include <map>
#include <sstream>

#include "lstmcaps/benchmark.hpp"
#include "lstmcaps/csv.hpp"
#include "lstmcaps/synthetic.hpp"

namespace lstmcaps {

struct RunConfig {
    // model
    Design design = Design::A;
    std::size_t n_features = 0;  // 0 -> taken from the data
    std::size_t timesteps = 64;
    std::size_t branch_width = 32;
    std::size_t capsule_dim = 0;
    std::size_t mixer_width = 0;
    std::size_t merge_width = 0;
    std::size_t encoder_layers = 1;
    RoutingMode routing_mode = RoutingMode::uniform;
    std::size_t routing_iters = 3;
    double dropout_rate = 0.2;

    // training
    std::size_t epochs = 100;
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    bool early_stopping = true;
    std::size_t early_stop_patience = 20;
    double val_fraction = 0.2;

    // detection / scoring
    double sensitivity = 1.0;
    double nab_portion = 0.1;
    std::string nab_placement = "center";  // left | center | right
    double probation_fraction = 0.0;

    // data
    std::string train_csv;
    std::string test_csv;
    std::string data_dir;
    bool skab_preset = false;
    std::string delimiter = ",";
    std::string timestamp_column;
    std::string feature_columns;  // comma-separated; empty -> all
    std::string anomaly_column = "anomaly";
    std::string changepoint_column = "changepoint";

    // synthetic generator (used when no csv/data_dir is given)
    std::size_t synth_features = 3;
    std::size_t synth_length = 1200;
    std::size_t synth_subsets = 5;
    std::size_t synth_anomaly_count = 2;
    double synth_anomaly_magnitude = 2.0;
    std::size_t synth_anomaly_width = 80;
    double synth_clean_fraction = 0.5;
    double synth_noise_level = 0.05;

    // run
    std::size_t runs = 1;
    std::uint64_t seed = 42;
    std::string out_dir = "out";
    std::string checkpoint;  // for detect: model to load
    bool verbose = false;

    void set(const std::string& key, const std::string& value);
    void load_file(const std::string& path);
    void validate() const;
    std::string canonical() const;
    std::uint64_t hash() const { return fnv1a(canonical()); }

    ModelSpec model_spec() const {
        ModelSpec s;
        s.design = design;
        s.n_features = n_features ? n_features : 1;
        s.timesteps = timesteps;
        s.branch_width = branch_width;
        s.capsule_dim = capsule_dim;
        s.mixer_width = mixer_width;
        s.merge_width = merge_width;
        s.encoder_layers = encoder_layers;
        s.routing_mode = routing_mode;
        s.routing_iters = routing_iters;
        s.dropout_rate = dropout_rate;
        s.seed = seed;
        return s;
    }

    TrainConfig train_config() const {
        TrainConfig c;
        c.epochs = epochs;
        c.learning_rate = learning_rate;
        c.batch_size = batch_size;
        c.early_stopping = early_stopping;
        c.early_stop_patience = early_stop_patience;
        c.val_fraction = val_fraction;
        c.seed = seed;
        c.verbose = verbose;
        return c;
    }

    SyntheticConfig synthetic_config(std::uint64_t subset_seed) const {
        SyntheticConfig c;
        c.n_features = synth_features;
        c.length = synth_length;
        c.anomaly = {synth_anomaly_count, synth_anomaly_magnitude, synth_anomaly_width};
        c.clean_fraction = synth_clean_fraction;
        c.noise_level = synth_noise_level;
        c.seed = subset_seed;
        return c;
    }

    BenchmarkOptions benchmark_options() const {
        BenchmarkOptions o;
        o.sensitivity = sensitivity;
        o.nab_portion = nab_portion;
        o.nab_placement = nab_placement == "left"    ? WindowPlacement::left
                          : nab_placement == "right" ? WindowPlacement::right
                                                     : WindowPlacement::center;
        o.probation_fraction = probation_fraction;
        return o;
    }

    SeriesFile series_file(const std::string& path) const {
        if (skab_preset) return SeriesFile::skab(path);
        SeriesFile f;
        f.path = path;
        f.delimiter = delimiter.empty() ? ',' : delimiter[0];
        f.timestamp_column = timestamp_column;
        f.anomaly_column = anomaly_column;
        f.changepoint_column = changepoint_column;
        if (!feature_columns.empty()) {
            std::stringstream ss(feature_columns);
            std::string name;
            while (std::getline(ss, name, ',')) f.feature_columns.push_back(name);
        }
        return f;
    }
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size() || x < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw config_error("key '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw config_error("key '" + key + "' expects a finite number, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "off" || v == "no") return false;
    throw config_error("key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::parse_real;
    using detail::parse_size;
    if (key == "design") {
        if (value.size() != 1) throw config_error("design must be one of A, B, C, D");
        design = design_from_letter(value[0]);
    } else if (key == "n_features") n_features = parse_size(key, value);
    else if (key == "timesteps") timesteps = parse_size(key, value);
    else if (key == "branch_width") branch_width = parse_size(key, value);
    else if (key == "capsule_dim") capsule_dim = parse_size(key, value);
    else if (key == "mixer_width") mixer_width = parse_size(key, value);
    else if (key == "merge_width") merge_width = parse_size(key, value);
    else if (key == "encoder_layers") encoder_layers = parse_size(key, value);
    else if (key == "routing_mode") {
        if (value == "uniform") routing_mode = RoutingMode::uniform;
        else if (value == "dynamic") routing_mode = RoutingMode::dynamic;
        else throw config_error("routing_mode must be 'uniform' or 'dynamic'");
    } else if (key == "routing_iters") routing_iters = parse_size(key, value);
    else if (key == "dropout_rate") dropout_rate = parse_real(key, value);
    else if (key == "epochs") epochs = parse_size(key, value);
    else if (key == "learning_rate") learning_rate = parse_real(key, value);
    else if (key == "batch_size") batch_size = parse_size(key, value);
    else if (key == "early_stopping") early_stopping = parse_bool(key, value);
    else if (key == "early_stop_patience") early_stop_patience = parse_size(key, value);
    else if (key == "val_fraction") val_fraction = parse_real(key, value);
    else if (key == "sensitivity") sensitivity = parse_real(key, value);
    else if (key == "nab_portion") nab_portion = parse_real(key, value);
    else if (key == "nab_placement") nab_placement = value;
    else if (key == "probation_fraction") probation_fraction = parse_real(key, value);
    else if (key == "train_csv") train_csv = value;
    else if (key == "test_csv") test_csv = value;
    else if (key == "data_dir") data_dir = value;
    else if (key == "skab_preset") skab_preset = parse_bool(key, value);
    else if (key == "delimiter") delimiter = value;
    else if (key == "timestamp_column") timestamp_column = value;
    else if (key == "feature_columns") feature_columns = value;
    else if (key == "anomaly_column") anomaly_column = value;
    else if (key == "changepoint_column") changepoint_column = value;
    else if (key == "synth_features") synth_features = parse_size(key, value);
    else if (key == "synth_length") synth_length = parse_size(key, value);
    else if (key == "synth_subsets") synth_subsets = parse_size(key, value);
    else if (key == "synth_anomaly_count") synth_anomaly_count = parse_size(key, value);
    else if (key == "synth_anomaly_magnitude") synth_anomaly_magnitude = parse_real(key, value);
    else if (key == "synth_anomaly_width") synth_anomaly_width = parse_size(key, value);
    else if (key == "synth_clean_fraction") synth_clean_fraction = parse_real(key, value);
    else if (key == "synth_noise_level") synth_noise_level = parse_real(key, value);
    else if (key == "runs") runs = parse_size(key, value);
    else if (key == "seed") seed = parse_size(key, value);
    else if (key == "out_dir") out_dir = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "verbose") verbose = parse_bool(key, value);
    else throw config_error("unknown config key '" + key + "'");
}

inline void RunConfig::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos || line[begin] == '#') continue;
        std::size_t eq = line.find('=', begin);
        if (eq == std::string::npos)
            throw config_error(path + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(begin, eq - begin);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& s) {
            std::size_t a = s.find_first_not_of(" \t");
            std::size_t b = s.find_last_not_of(" \t");
            s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
        };
        trim(key);
        trim(value);
        set(key, value);
    }
}

inline void RunConfig::validate() const {
    model_spec().validate();
    train_config().validate();
    if (!(sensitivity > 0.0)) throw config_error("sensitivity must be > 0");
    if (nab_portion <= 0.0 || nab_portion > 1.0) throw config_error("nab_portion must be in (0, 1]");
    if (nab_placement != "left" && nab_placement != "center" && nab_placement != "right")
        throw config_error("nab_placement must be left, center or right");
    if (probation_fraction < 0.0 || probation_fraction >= 1.0)
        throw config_error("probation_fraction must be in [0, 1)");
    if (delimiter.size() != 1) throw config_error("delimiter must be a single character");
    if (runs < 1) throw config_error("runs must be >= 1");
    if (out_dir.empty()) throw config_error("out_dir must not be empty");
    if (synth_clean_fraction < 0.0 || synth_clean_fraction >= 1.0)
        throw config_error("synth_clean_fraction must be in [0, 1)");
    if (synth_noise_level < 0.0) throw config_error("synth_noise_level must be >= 0");
}

/// Canonical serialisation; the FNV hash of this string identifies a run
/// configuration in manifests and reports.
inline std::string RunConfig::canonical() const {
    std::ostringstream os;
    os << "design=" << design_letter(design) << '\n'
       << "n_features=" << n_features << '\n'
       << "timesteps=" << timesteps << '\n'
       << "branch_width=" << branch_width << '\n'
       << "capsule_dim=" << capsule_dim << '\n'
       << "mixer_width=" << mixer_width << '\n'
       << "merge_width=" << merge_width << '\n'
       << "encoder_layers=" << encoder_layers << '\n'
       << "routing_mode=" << (routing_mode == RoutingMode::dynamic ? "dynamic" : "uniform") << '\n'
       << "routing_iters=" << routing_iters << '\n'
       << "dropout_rate=" << format_double(dropout_rate) << '\n'
       << "epochs=" << epochs << '\n'
       << "learning_rate=" << format_double(learning_rate) << '\n'
       << "batch_size=" << batch_size << '\n'
       << "early_stopping=" << early_stopping << '\n'
       << "early_stop_patience=" << early_stop_patience << '\n'
       << "val_fraction=" << format_double(val_fraction) << '\n'
       << "sensitivity=" << format_double(sensitivity) << '\n'
       << "nab_portion=" << format_double(nab_portion) << '\n'
       << "nab_placement=" << nab_placement << '\n'
       << "probation_fraction=" << format_double(probation_fraction) << '\n'
       << "train_csv=" << train_csv << '\n'
       << "test_csv=" << test_csv << '\n'
       << "data_dir=" << data_dir << '\n'
       << "skab_preset=" << skab_preset << '\n'
       << "delimiter=" << delimiter << '\n'
       << "timestamp_column=" << timestamp_column << '\n'
       << "feature_columns=" << feature_columns << '\n'
       << "anomaly_column=" << anomaly_column << '\n'
       << "changepoint_column=" << changepoint_column << '\n'
       << "synth_features=" << synth_features << '\n'
       << "synth_length=" << synth_length << '\n'
       << "synth_subsets=" << synth_subsets << '\n'
       << "synth_anomaly_count=" << synth_anomaly_count << '\n'
       << "synth_anomaly_magnitude=" << format_double(synth_anomaly_magnitude) << '\n'
       << "synth_anomaly_width=" << synth_anomaly_width << '\n'
       << "synth_clean_fraction=" << format_double(synth_clean_fraction) << '\n'
       << "synth_noise_level=" << format_double(synth_noise_level) << '\n'
       << "runs=" << runs << '\n'
       << "seed=" << seed << '\n'
       << "checkpoint=" << checkpoint << '\n';
    return os.str();
}

}  // namespace lstmcaps
