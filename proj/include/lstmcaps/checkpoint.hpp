#pragma once

// Self-describing binary checkpoint: model spec, named parameter tensors,
// normalisation stats and the calibrated threshold profile in one container.
// Values are stored as raw little-endian f64, so save -> load -> forward is
// bit-exact.

#include <cstring>
#include <fstream>

#include "lstmcaps/data.hpp"
#include "lstmcaps/detector.hpp"
#include "lstmcaps/model.hpp"

namespace lstmcaps {

inline constexpr char kCheckpointMagic[8] = {'L', 'C', 'A', 'P', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelSpec spec;
    std::vector<std::pair<std::string, std::vector<double>>> params;
    NormalizerStats stats;
    bool has_profile = false;
    ThresholdProfile profile;
};

namespace detail {

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw io_error("truncated checkpoint");
    return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is) {
    auto n = get<std::uint32_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw io_error("truncated checkpoint");
    return s;
}

inline void put_doubles(std::ostream& os, const std::vector<double>& v) {
    put<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> get_doubles(std::istream& is) {
    auto n = get<std::uint64_t>(is);
    std::vector<double> v(n);
    is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw io_error("truncated checkpoint");
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Model& model,
                            const NormalizerStats& stats, const ThresholdProfile* profile) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put<std::uint32_t>(os, kCheckpointVersion);

    const ModelSpec& s = model.spec();
    detail::put<char>(os, design_letter(s.design));
    detail::put<std::uint64_t>(os, s.n_features);
    detail::put<std::uint64_t>(os, s.timesteps);
    detail::put<std::uint64_t>(os, s.branch_width);
    detail::put<std::uint64_t>(os, s.capsule_dim);
    detail::put<std::uint64_t>(os, s.mixer_width);
    detail::put<std::uint64_t>(os, s.merge_width);
    detail::put<std::uint64_t>(os, s.encoder_layers);
    detail::put<std::uint8_t>(os, s.routing_mode == RoutingMode::dynamic ? 1 : 0);
    detail::put<std::uint64_t>(os, s.routing_iters);
    detail::put<double>(os, s.dropout_rate);
    detail::put<std::uint64_t>(os, s.seed);

    auto params = model.parameters();
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        detail::put_string(os, name);
        detail::put_doubles(os, t.value());
    }

    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(stats.features()));
    detail::put_doubles(os, stats.mu);
    detail::put_doubles(os, stats.sigma);
    for (std::size_t f = 0; f < stats.features(); ++f)
        detail::put<std::uint8_t>(os, stats.constant[f] ? 1 : 0);

    detail::put<std::uint8_t>(os, profile ? 1 : 0);
    if (profile) {
        detail::put<double>(os, profile->sensitivity);
        detail::put_doubles(os, profile->per_feature_threshold);
        detail::put<std::uint64_t>(os, profile->calibration_errors.rows);
        detail::put<std::uint64_t>(os, profile->calibration_errors.cols);
        detail::put_doubles(os, profile->calibration_errors.v);
    }
    if (!os) throw io_error("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw io_error(path + " is not a checkpoint file");
    auto version = detail::get<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ck;
    ck.spec.design = design_from_letter(detail::get<char>(is));
    ck.spec.n_features = detail::get<std::uint64_t>(is);
    ck.spec.timesteps = detail::get<std::uint64_t>(is);
    ck.spec.branch_width = detail::get<std::uint64_t>(is);
    ck.spec.capsule_dim = detail::get<std::uint64_t>(is);
    ck.spec.mixer_width = detail::get<std::uint64_t>(is);
    ck.spec.merge_width = detail::get<std::uint64_t>(is);
    ck.spec.encoder_layers = detail::get<std::uint64_t>(is);
    ck.spec.routing_mode =
        detail::get<std::uint8_t>(is) ? RoutingMode::dynamic : RoutingMode::uniform;
    ck.spec.routing_iters = detail::get<std::uint64_t>(is);
    ck.spec.dropout_rate = detail::get<double>(is);
    ck.spec.seed = detail::get<std::uint64_t>(is);

    auto n_params = detail::get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n_params; ++i) {
        std::string name = detail::get_string(is);
        ck.params.emplace_back(std::move(name), detail::get_doubles(is));
    }

    auto f = detail::get<std::uint32_t>(is);
    ck.stats.mu = detail::get_doubles(is);
    ck.stats.sigma = detail::get_doubles(is);
    ck.stats.constant.resize(f);
    for (std::uint32_t i = 0; i < f; ++i) ck.stats.constant[i] = detail::get<std::uint8_t>(is) != 0;

    ck.has_profile = detail::get<std::uint8_t>(is) != 0;
    if (ck.has_profile) {
        ck.profile.sensitivity = detail::get<double>(is);
        ck.profile.per_feature_threshold = detail::get_doubles(is);
        auto rows = detail::get<std::uint64_t>(is);
        auto cols = detail::get<std::uint64_t>(is);
        ck.profile.calibration_errors.rows = rows;
        ck.profile.calibration_errors.cols = cols;
        ck.profile.calibration_errors.v = detail::get_doubles(is);
        if (ck.profile.calibration_errors.v.size() != rows * cols)
            throw io_error("checkpoint calibration table is inconsistent");
    }
    return ck;
}

/// Rebuilds the model and injects the stored parameter values.
inline Model restore_model(const Checkpoint& ck) {
    Model model = Model::build(ck.spec);
    for (const auto& [name, values] : ck.params) model.set_parameter(name, values);
    return model;
}

}  // namespace lstmcaps
