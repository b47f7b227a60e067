#pragma once

// Delimited time-series ingestion. Generic layout: header row naming feature
// columns, optional timestamp column, optional 0/1 anomaly and changepoint
// label columns. The SKAB preset matches that benchmark's files: semicolon
// delimiter, leading datetime column, trailing anomaly/changepoint labels.

#include <charconv>
#include <fstream>
#include <sstream>

#include "lstmcaps/common.hpp"

namespace lstmcaps {

struct SeriesFile {
    std::string path;
    char delimiter = ',';
    std::string timestamp_column;                // optional, by name
    std::vector<std::string> feature_columns;    // empty -> every remaining column
    std::string anomaly_column;                  // optional
    std::string changepoint_column;              // optional

    static SeriesFile skab(std::string path) {
        SeriesFile f;
        f.path = std::move(path);
        f.delimiter = ';';
        f.timestamp_column = "datetime";
        f.anomaly_column = "anomaly";
        f.changepoint_column = "changepoint";
        return f;
    }
};

struct LoadedSeries {
    Matrix series;  // [L, F]
    std::vector<std::string> feature_names;
    std::vector<std::string> timestamps;   // empty when no timestamp column
    std::vector<std::uint8_t> anomaly;     // empty when no anomaly column
    std::vector<std::uint8_t> changepoint;
    bool has_labels() const { return !anomaly.empty(); }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw io_error("cannot parse cell '" + cell + "' at row " + std::to_string(row) +
                       ", column '" + column + "'");
    return v;
}

inline std::uint8_t parse_label(const std::string& cell, std::size_t row,
                                const std::string& column) {
    double v = parse_cell(cell, row, column);
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw io_error("label column '" + column + "' must be 0/1, got '" + cell + "' at row " +
                   std::to_string(row));
}

}  // namespace detail

inline LoadedSeries load_csv(const SeriesFile& spec) {
    std::ifstream is(spec.path, std::ios::binary);
    if (!is) throw io_error("cannot open " + spec.path);
    std::string line;
    if (!std::getline(is, line) || line.empty()) throw io_error(spec.path + " is empty");

    std::vector<std::string> header = detail::split_line(line, spec.delimiter);
    auto column_index = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };

    std::ptrdiff_t ts_col = -1;
    if (!spec.timestamp_column.empty()) {
        ts_col = column_index(spec.timestamp_column);
        if (ts_col < 0) throw io_error("missing timestamp column '" + spec.timestamp_column +
                                       "' in " + spec.path);
    }
    // Label columns are optional: configured names that are absent simply
    // yield no labels, so the same preset reads labelled and clean files.
    std::ptrdiff_t anom_col = spec.anomaly_column.empty() ? -1 : column_index(spec.anomaly_column);
    std::ptrdiff_t cp_col =
        spec.changepoint_column.empty() ? -1 : column_index(spec.changepoint_column);

    std::vector<std::size_t> feature_idx;
    LoadedSeries out;
    if (spec.feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            auto si = static_cast<std::ptrdiff_t>(i);
            if (si == ts_col || si == anom_col || si == cp_col) continue;
            feature_idx.push_back(i);
            out.feature_names.push_back(header[i]);
        }
    } else {
        for (const std::string& name : spec.feature_columns) {
            std::ptrdiff_t i = column_index(name);
            if (i < 0) throw io_error("missing feature column '" + name + "' in " + spec.path);
            feature_idx.push_back(static_cast<std::size_t>(i));
            out.feature_names.push_back(name);
        }
    }
    if (feature_idx.empty()) throw io_error("no feature columns in " + spec.path);

    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        std::vector<std::string> cells = detail::split_line(line, spec.delimiter);
        if (cells.size() != header.size())
            throw io_error(spec.path + " row " + std::to_string(row) + " has " +
                           std::to_string(cells.size()) + " cells, header has " +
                           std::to_string(header.size()));
        for (std::size_t k = 0; k < feature_idx.size(); ++k)
            values.push_back(detail::parse_cell(cells[feature_idx[k]], row, out.feature_names[k]));
        if (ts_col >= 0) out.timestamps.push_back(cells[static_cast<std::size_t>(ts_col)]);
        if (anom_col >= 0)
            out.anomaly.push_back(detail::parse_label(cells[static_cast<std::size_t>(anom_col)],
                                                      row, spec.anomaly_column));
        if (cp_col >= 0)
            out.changepoint.push_back(detail::parse_label(
                cells[static_cast<std::size_t>(cp_col)], row, spec.changepoint_column));
    }
    if (row < 2) throw io_error(spec.path + " needs at least 2 data rows");

    out.series.rows = row;
    out.series.cols = feature_idx.size();
    out.series.v = std::move(values);
    return out;
}

/// Writes features (12 significant digits) plus optional label columns.
inline void write_series_csv(const std::string& path, const Matrix& series,
                             const std::vector<std::string>& feature_names,
                             const std::vector<std::uint8_t>* anomaly = nullptr,
                             const std::vector<std::uint8_t>* changepoint = nullptr,
                             char delimiter = ',') {
    if (feature_names.size() != series.cols)
        throw contract_error("feature name count does not match series columns");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write " + path);
    for (std::size_t c = 0; c < series.cols; ++c) {
        if (c) os << delimiter;
        os << feature_names[c];
    }
    if (anomaly) os << delimiter << "anomaly";
    if (changepoint) os << delimiter << "changepoint";
    os << "\n";
    char buf[40];
    for (std::size_t r = 0; r < series.rows; ++r) {
        for (std::size_t c = 0; c < series.cols; ++c) {
            if (c) os << delimiter;
            std::snprintf(buf, sizeof(buf), "%.12g", series.at(r, c));
            os << buf;
        }
        if (anomaly) os << delimiter << static_cast<int>((*anomaly)[r]);
        if (changepoint) os << delimiter << static_cast<int>((*changepoint)[r]);
        os << "\n";
    }
    if (!os) throw io_error("failed writing " + path);
}

}  // namespace lstmcaps
