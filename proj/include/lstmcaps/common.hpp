#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lstmcaps {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Error taxonomy. Everything the library throws derives from lstmcaps::error
// so callers can catch one type at the boundary.
// ---------------------------------------------------------------------------

class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor/layer dimension mismatch.
class shape_error : public error {
public:
    using error::error;
};

/// Violated operation precondition (empty input, bad range, ...).
class contract_error : public error {
public:
    using error::error;
};

/// Invalid or inconsistent user configuration.
class config_error : public error {
public:
    using error::error;
};

/// File / parse problems.
class io_error : public error {
public:
    using error::error;
};

/// Dataset unusable for the requested benchmark protocol.
class dataset_error : public error {
public:
    using error::error;
};

/// Training diverged (non-finite loss).
class training_error : public error {
public:
    using error::error;
};

/// Metric denominator empty (e.g. FAR with no negatives in truth).
class undefined_rate_error : public error {
public:
    using error::error;
};

// ---------------------------------------------------------------------------
// Small dense row-major matrix used for raw series and error tables.
// ---------------------------------------------------------------------------

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    bool empty() const { return v.empty(); }
};

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

/// SplitMix64 step; used to derive independent RNG streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a over a string; used for config hashes in manifests and reports.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Shortest exact decimal form of a double (round-trips bit-exactly).
std::string format_double(double x);

inline std::string size_list_str(const std::vector<std::size_t>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

}  // namespace lstmcaps

#include <cstdio>

namespace lstmcaps {

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

}  // namespace lstmcaps
